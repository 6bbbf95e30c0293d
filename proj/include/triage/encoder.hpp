#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/kernels.hpp"

namespace triage {

// Unit-norm dense representation of a ticket description. The all-zero
// vector stands for text without any tokens.
using Embedding = std::vector<float>;

bool is_zero(std::span<const float> v);
// Scales to unit L2 norm; leaves the zero vector untouched.
void normalize(std::span<float> v);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Hashed TF-IDF over unigrams and bigrams. Each feature hashes (seeded
// FNV-1a) to one of `dimension` buckets with a +/-1 sign taken from the top
// hash bit, so unrelated features cancel in expectation.
struct EncoderModel {
  std::uint32_t dimension = 512;
  std::uint64_t hash_seed = 0;
  std::vector<float> idf;          // per bucket, ln(1 + N / df)
  std::uint64_t documents = 0;     // N
  std::uint64_t fitted_on = 0;     // order-free corpus fingerprint

  bool operator==(const EncoderModel&) const = default;
};

constexpr std::uint32_t kMinEncoderDimension = 16;

// Buckets no training document touched get ln(1 + N), the weight of a
// feature seen once.
EncoderModel fit_encoder(std::span<const std::vector<std::string>> documents,
                         std::uint32_t dimension, std::uint64_t hash_seed);
EncoderModel fit_encoder(std::span<const CleanTicket> corpus,
                         std::uint32_t dimension, std::uint64_t hash_seed);

Embedding encode(const EncoderModel& model, std::string_view text);
Embedding encode_tokens(const EncoderModel& model,
                        std::span<const std::string> tokens);
std::vector<Embedding> encode_batch(
    const EncoderModel& model,
    std::span<const std::vector<std::string>> documents,
    kernels::Exec exec = kernels::Exec::parallel);

std::string serialize(const EncoderModel& model);
EncoderModel deserialize_encoder(std::string_view bytes);

}  // namespace triage
