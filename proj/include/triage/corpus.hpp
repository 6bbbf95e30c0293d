#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace triage {

struct RawTicket {
  std::string id;
  std::string group;
  std::string resolver;
  std::string description;
  std::optional<std::string> resolved_at;

  bool operator==(const RawTicket&) const = default;
};

// A validated record: non-empty group/resolver and at least `min_tokens`
// normalized tokens.
struct CleanTicket {
  std::string id;
  std::string group;
  std::string resolver;
  std::string description;
  std::optional<std::string> resolved_at;
  std::vector<std::string> tokens;

  bool operator==(const CleanTicket&) const = default;
  RawTicket raw() const {
    return {id, group, resolver, description, resolved_at};
  }
};

enum class InputFormat { csv, jsonl };

InputFormat parse_input_format(const std::string& name);

// Reads tickets; record order is preserved and a missing id becomes the
// zero-based record ordinal. Throws SchemaError when a required column/key
// is absent and ParseError (with the record index) for undecodable records
// and duplicate ids.
std::vector<RawTicket> ingest(std::istream& in, InputFormat format);

constexpr int kDefaultMinTokens = 3;

struct CleanReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t empty_group = 0;
  std::size_t empty_resolver = 0;
  std::size_t nonsense_description = 0;
};

struct CleanResult {
  std::vector<CleanTicket> tickets;
  CleanReport report;
};

// Drops records with an empty group, empty resolver, or fewer than
// `min_tokens` tokens (first matching reason in that order is counted).
// Group and resolver labels are whitespace-trimmed.
CleanResult clean(std::span<const RawTicket> tickets,
                  int min_tokens = kDefaultMinTokens);

struct SplitRatios {
  unsigned train = 8;
  unsigned validation = 1;
  unsigned test = 1;
};

enum class SplitOrder { random, chronological };

struct DatasetSplit {
  std::vector<CleanTicket> train;
  std::vector<CleanTicket> validation;
  std::vector<CleanTicket> test;
  std::uint64_t seed = 0;
};

// Deterministic shuffle (or chronological sort by resolved_at) followed by
// contiguous slicing. Validation and test sizes are floor(n * r / total);
// train takes the remainder.
DatasetSplit split(std::span<const CleanTicket> tickets,
                   SplitRatios ratios = {}, std::uint64_t seed = 0,
                   SplitOrder order = SplitOrder::random);

// One JSON object per line with id/group/resolver/description and
// resolved_at when present.
void write_jsonl(std::ostream& out, std::span<const CleanTicket> tickets);

// Order-sensitive fingerprint of a corpus.
std::uint64_t corpus_fingerprint(std::span<const CleanTicket> tickets);

}  // namespace triage
