#include <algorithm>
#include <cmath>
#include <random>

#include "triage/binary_io.hpp"
#include "triage/discovery.hpp"
#include "triage/errors.hpp"

namespace triage {
namespace {

constexpr std::string_view kMagic = "TDALDA1";
constexpr std::uint32_t kVersion = 1;

// log p(w, z) under the collapsed model, up to no constant.
double joint_log_likelihood(const std::vector<std::uint32_t>& word_topic,
                            const std::vector<std::uint64_t>& topic_totals,
                            const std::vector<std::uint32_t>& doc_topic,
                            const std::vector<std::uint32_t>& doc_length,
                            std::size_t vocab, std::size_t topics,
                            double alpha, double beta) {
  double ll = 0.0;
  const double lg_beta = std::lgamma(beta);
  const double vb = static_cast<double>(vocab) * beta;
  for (std::size_t k = 0; k < topics; ++k) {
    ll += std::lgamma(vb) - std::lgamma(static_cast<double>(topic_totals[k]) + vb);
  }
  for (std::size_t w = 0; w < vocab; ++w) {
    for (std::size_t k = 0; k < topics; ++k) {
      const auto c = word_topic[w * topics + k];
      if (c) ll += std::lgamma(c + beta) - lg_beta;
    }
  }
  const double lg_alpha = std::lgamma(alpha);
  const double ka = static_cast<double>(topics) * alpha;
  for (std::size_t d = 0; d < doc_length.size(); ++d) {
    ll += std::lgamma(ka) - std::lgamma(doc_length[d] + ka);
    for (std::size_t k = 0; k < topics; ++k) {
      const auto c = doc_topic[d * topics + k];
      if (c) ll += std::lgamma(c + alpha) - lg_alpha;
    }
  }
  return ll;
}

}  // namespace

double TopicModel::phi(std::size_t word, std::size_t topic) const {
  const double v = static_cast<double>(vocabulary.size());
  return (word_topic[word * topics + topic] + beta) /
         (static_cast<double>(topic_totals[topic]) + v * beta);
}

LdaFit fit_lda(std::span<const std::vector<std::string>> documents,
               const LdaParams& params) {
  if (params.topics < 1) throw InvalidArgument("fit_lda: topics must be >= 1");
  if (params.iterations < 1) throw InvalidArgument("fit_lda: iterations must be >= 1");
  if (documents.empty()) throw InvalidArgument("fit_lda: empty corpus");

  std::vector<std::string> all_tokens;
  for (const auto& d : documents) all_tokens.insert(all_tokens.end(), d.begin(), d.end());
  if (all_tokens.empty()) throw InvalidArgument("fit_lda: empty vocabulary");

  LdaFit fit;
  TopicModel& m = fit.model;
  m.topics = params.topics;
  m.alpha = params.alpha > 0.0 ? params.alpha : 50.0 / static_cast<double>(params.topics);
  m.beta = params.beta;
  m.vocabulary = LabelVocabulary::from_observed(all_tokens);
  all_tokens.clear();
  all_tokens.shrink_to_fit();

  const std::size_t K = m.topics;
  const std::size_t V = m.vocabulary.size();
  const std::size_t D = documents.size();
  m.word_topic.assign(V * K, 0);
  m.topic_totals.assign(K, 0);
  std::vector<std::uint32_t> doc_topic(D * K, 0);
  std::vector<std::uint32_t> doc_length(D, 0);

  std::vector<std::vector<std::uint32_t>> words(D);
  std::vector<std::vector<std::uint32_t>> z(D);
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> init(0, K - 1);
  for (std::size_t d = 0; d < D; ++d) {
    for (const auto& tok : documents[d]) {
      const auto w = static_cast<std::uint32_t>(m.vocabulary.at(tok));
      const auto k = static_cast<std::uint32_t>(init(rng));
      words[d].push_back(w);
      z[d].push_back(k);
      ++m.word_topic[w * K + k];
      ++m.topic_totals[k];
      ++doc_topic[d * K + k];
    }
    doc_length[d] = static_cast<std::uint32_t>(words[d].size());
  }

  const double vbeta = static_cast<double>(V) * m.beta;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> cdf(K);
  for (std::size_t sweep = 0; sweep < params.iterations; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      std::uint32_t* nd = doc_topic.data() + d * K;
      for (std::size_t i = 0; i < words[d].size(); ++i) {
        const std::uint32_t w = words[d][i];
        std::uint32_t* nw = m.word_topic.data() + w * K;
        const std::uint32_t old = z[d][i];
        --nw[old];
        --nd[old];
        --m.topic_totals[old];
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          total += (nd[k] + m.alpha) * (nw[k] + m.beta) /
                   (static_cast<double>(m.topic_totals[k]) + vbeta);
          cdf[k] = total;
        }
        const double u = unit(rng) * total;
        const auto k = static_cast<std::uint32_t>(
            std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), K - 1));
        z[d][i] = k;
        ++nw[k];
        ++nd[k];
        ++m.topic_totals[k];
      }
    }
    fit.log_likelihood.push_back(joint_log_likelihood(
        m.word_topic, m.topic_totals, doc_topic, doc_length, V, K, m.alpha, m.beta));
  }

  fit.doc_topics.resize(D);
  const double ka = static_cast<double>(K) * m.alpha;
  for (std::size_t d = 0; d < D; ++d) {
    auto& theta = fit.doc_topics[d];
    theta.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      theta[k] = (doc_topic[d * K + k] + m.alpha) / (doc_length[d] + ka);
    }
  }
  return fit;
}

std::vector<double> infer_topics(const TopicModel& model,
                                 std::span<const std::string> tokens,
                                 std::size_t rounds) {
  const std::size_t K = model.topics;
  std::vector<std::size_t> known;
  for (const auto& t : tokens) {
    if (auto w = model.vocabulary.find(t)) known.push_back(*w);
  }
  std::vector<double> theta(K, 1.0 / static_cast<double>(K));
  if (known.empty()) return theta;
  std::vector<double> counts(K), resp(K);
  const double denom = static_cast<double>(known.size()) + static_cast<double>(K) * model.alpha;
  for (std::size_t round = 0; round < rounds; ++round) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (auto w : known) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        resp[k] = model.phi(w, k) * theta[k];
        s += resp[k];
      }
      for (std::size_t k = 0; k < K; ++k) counts[k] += resp[k] / s;
    }
    for (std::size_t k = 0; k < K; ++k) theta[k] = (counts[k] + model.alpha) / denom;
  }
  return theta;
}

TopicAssignment assign_topic(const TopicModel& model,
                             std::span<const std::string> tokens) {
  const bool any_known = std::any_of(tokens.begin(), tokens.end(), [&](const auto& t) {
    return model.vocabulary.find(t).has_value();
  });
  if (!any_known) {
    const auto it = std::max_element(model.topic_totals.begin(), model.topic_totals.end());
    return {static_cast<std::size_t>(it - model.topic_totals.begin()), true};
  }
  const auto theta = infer_topics(model, tokens);
  const auto it = std::max_element(theta.begin(), theta.end());
  return {static_cast<std::size_t>(it - theta.begin()), false};
}

std::string serialize(const TopicModel& model) {
  io::BinaryWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u64(model.topics);
  w.f64(model.alpha);
  w.f64(model.beta);
  write_vocabulary(w, model.vocabulary);
  w.u32s(model.word_topic);
  w.u64(model.topic_totals.size());
  for (auto t : model.topic_totals) w.u64(t);
  return std::move(w).take();
}

TopicModel deserialize_topic_model(std::string_view bytes) {
  io::BinaryReader r(bytes, "topic model");
  r.expect_magic(kMagic);
  r.expect_version(kVersion);
  TopicModel m;
  m.topics = static_cast<std::size_t>(r.u64());
  m.alpha = r.f64();
  m.beta = r.f64();
  m.vocabulary = read_vocabulary(r);
  m.word_topic = r.u32s();
  const std::uint64_t n = r.u64();
  if (n != m.topics) throw FormatError("topic model: topic count mismatch");
  m.topic_totals.resize(n);
  for (auto& t : m.topic_totals) t = r.u64();
  r.expect_end();
  if (m.word_topic.size() != m.vocabulary.size() * m.topics) {
    throw FormatError("topic model: count matrix shape mismatch");
  }
  return m;
}

}  // namespace triage
