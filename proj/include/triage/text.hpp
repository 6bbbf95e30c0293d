#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace triage {

// True if `bytes` is well-formed UTF-8 (no overlongs, no surrogates).
bool is_valid_utf8(std::string_view bytes);

// Splits text on Unicode whitespace and punctuation, lowercasing ASCII
// letters. Every returned token contains only letters, digits, or non-ASCII
// word characters, so every token counts as alphanumeric. Invalid UTF-8
// sequences are treated as boundaries.
std::vector<std::string> tokenize(std::string_view text);

// Truncates to at most `max_chars` code points, cutting back to the last
// word boundary when the text is longer than the limit.
std::string snippet(std::string_view text, std::size_t max_chars = 200);

// 64-bit FNV-1a. Stable across platforms; used for feature hashing and
// fingerprints.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer, used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

// RFC-3339 UTC timestamp, e.g. 2024-01-01T00:00:00.000Z.
std::string format_utc(std::chrono::system_clock::time_point t);

}  // namespace triage
