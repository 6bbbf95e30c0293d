#include "triage/encoder.hpp"

#include <cmath>

#include "triage/binary_io.hpp"
#include "triage/errors.hpp"
#include "triage/text.hpp"

namespace triage {
namespace {

constexpr std::string_view kMagic = "TDAENC1";
constexpr std::uint32_t kVersion = 1;

struct HashedFeature {
  std::uint32_t bucket;
  float sign;
};

template <typename Fn>
void for_each_feature(const EncoderModel& model,
                      std::span<const std::string> tokens, Fn&& fn) {
  const std::uint64_t basis = mix64(model.hash_seed);
  const auto emit = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a64(feature, basis);
    fn(HashedFeature{static_cast<std::uint32_t>(h % model.dimension),
                     (h >> 63) ? -1.0f : 1.0f});
  };
  std::string bigram;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    emit(tokens[i]);
    if (i + 1 < tokens.size()) {
      bigram.assign(tokens[i]);
      bigram.push_back(' ');
      bigram.append(tokens[i + 1]);
      emit(bigram);
    }
  }
}

}  // namespace

bool is_zero(std::span<const float> v) {
  for (float x : v) {
    if (x != 0.0f) return false;
  }
  return true;
}

void normalize(std::span<float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq == 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& x : v) x = static_cast<float>(x * inv);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
  const double na = std::sqrt(kernels::dot(a, a));
  const double nb = std::sqrt(kernels::dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kernels::dot(a, b) / (na * nb);
}

EncoderModel fit_encoder(std::span<const std::vector<std::string>> documents,
                         std::uint32_t dimension, std::uint64_t hash_seed) {
  if (documents.empty()) throw InvalidArgument("fit_encoder: empty corpus");
  if (dimension < kMinEncoderDimension) {
    throw InvalidArgument("fit_encoder: dimension must be >= " +
                          std::to_string(kMinEncoderDimension));
  }
  EncoderModel model;
  model.dimension = dimension;
  model.hash_seed = hash_seed;
  model.documents = documents.size();

  std::vector<std::uint64_t> df(dimension, 0);
  std::vector<std::uint32_t> seen_in(dimension, 0);
  std::uint32_t doc_no = 0;
  for (const auto& doc : documents) {
    ++doc_no;
    for_each_feature(model, doc, [&](HashedFeature f) {
      if (seen_in[f.bucket] != doc_no) {
        seen_in[f.bucket] = doc_no;
        ++df[f.bucket];
      }
    });
    std::uint64_t h = fnv1a64("doc");
    for (const auto& tok : doc) {
      h = fnv1a64(tok, h);
      h = fnv1a64(" ", h);
    }
    model.fitted_on += mix64(h);  // commutative: order-free
  }
  const double n = static_cast<double>(documents.size());
  model.idf.resize(dimension);
  for (std::uint32_t b = 0; b < dimension; ++b) {
    const double d = df[b] == 0 ? 1.0 : static_cast<double>(df[b]);
    model.idf[b] = static_cast<float>(std::log(1.0 + n / d));
  }
  return model;
}

EncoderModel fit_encoder(std::span<const CleanTicket> corpus,
                         std::uint32_t dimension, std::uint64_t hash_seed) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& t : corpus) docs.push_back(t.tokens);
  return fit_encoder(docs, dimension, hash_seed);
}

Embedding encode_tokens(const EncoderModel& model,
                        std::span<const std::string> tokens) {
  std::vector<double> acc(model.dimension, 0.0);
  for_each_feature(model, tokens,
                   [&](HashedFeature f) { acc[f.bucket] += f.sign; });
  double sq = 0.0;
  for (std::uint32_t b = 0; b < model.dimension; ++b) {
    acc[b] *= model.idf[b];
    sq += acc[b] * acc[b];
  }
  Embedding out(model.dimension, 0.0f);
  if (sq == 0.0) return out;
  const double inv = 1.0 / std::sqrt(sq);
  for (std::uint32_t b = 0; b < model.dimension; ++b) {
    out[b] = static_cast<float>(acc[b] * inv);
  }
  return out;
}

Embedding encode(const EncoderModel& model, std::string_view text) {
  const auto tokens = tokenize(text);
  return encode_tokens(model, tokens);
}

std::vector<Embedding> encode_batch(
    const EncoderModel& model,
    std::span<const std::vector<std::string>> documents, kernels::Exec exec) {
  std::vector<Embedding> out(documents.size());
  const auto n = static_cast<std::ptrdiff_t>(documents.size());
  const bool par = exec == kernels::Exec::parallel;
  (void)par;
#pragma omp parallel for schedule(dynamic, 64) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = encode_tokens(model, documents[i]);
  }
  return out;
}

std::string serialize(const EncoderModel& model) {
  io::BinaryWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(model.dimension);
  w.u64(model.hash_seed);
  w.u64(model.documents);
  w.u64(model.fitted_on);
  w.f32s(model.idf);
  return std::move(w).take();
}

EncoderModel deserialize_encoder(std::string_view bytes) {
  io::BinaryReader r(bytes, "encoder");
  r.expect_magic(kMagic);
  r.expect_version(kVersion);
  EncoderModel m;
  m.dimension = r.u32();
  m.hash_seed = r.u64();
  m.documents = r.u64();
  m.fitted_on = r.u64();
  m.idf = r.f32s();
  r.expect_end();
  if (m.dimension < kMinEncoderDimension || m.idf.size() != m.dimension) {
    throw FormatError("encoder: inconsistent dimension");
  }
  return m;
}

}  // namespace triage
