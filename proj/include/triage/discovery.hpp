#pragma once

// Resolver-list discovery: an LDA topic model partitions the corpus, HDBSCAN
// clusters the embeddings inside each topic, and every cluster becomes a
// resolver list with within-cluster resolver frequencies.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/encoder.hpp"
#include "triage/kernels.hpp"
#include "triage/softmax_head.hpp"

namespace triage {

struct LdaParams {
  std::size_t topics = 64;
  double alpha = 0.0;  // <= 0 selects 50 / topics
  double beta = 0.01;
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
};

// Symmetric-prior LDA state after collapsed Gibbs sampling.
struct TopicModel {
  std::size_t topics = 0;
  double alpha = 0.0;
  double beta = 0.0;
  LabelVocabulary vocabulary;              // token <-> word index
  std::vector<std::uint32_t> word_topic;   // V x K, row-major
  std::vector<std::uint64_t> topic_totals; // K

  // P(word | topic) with the beta smoothing.
  double phi(std::size_t word, std::size_t topic) const;
  bool operator==(const TopicModel&) const = default;
};

struct LdaFit {
  TopicModel model;
  std::vector<double> log_likelihood;            // log p(w, z) after each sweep
  std::vector<std::vector<double>> doc_topics;   // theta per document
};

// Throws InvalidArgument when K or iterations is zero, the corpus is empty,
// or no document has a token.
LdaFit fit_lda(std::span<const std::vector<std::string>> documents,
               const LdaParams& params);

// Document-topic distribution from 20 rounds of fixed-point iteration with
// the word-topic distributions held fixed. Out-of-vocabulary tokens are
// ignored.
std::vector<double> infer_topics(const TopicModel& model,
                                 std::span<const std::string> tokens,
                                 std::size_t rounds = 20);

struct TopicAssignment {
  std::size_t topic = 0;
  // Set when no token is in the vocabulary; topic is then the one with the
  // largest global share.
  bool fallback = false;
};

TopicAssignment assign_topic(const TopicModel& model,
                             std::span<const std::string> tokens);

struct HdbscanParams {
  std::size_t min_cluster_size = 10;
  std::size_t min_samples = 0;  // 0 selects min_cluster_size
  // Lets the root be selected, so one dense group is a cluster rather than
  // noise.
  bool allow_single_cluster = true;
};

constexpr int kNoise = -1;

// HDBSCAN over angular distance: core distance at the min_samples-th
// neighbour (the point itself counts), mutual-reachability minimum spanning
// tree, condensed tree, excess-of-mass selection. Returns a label per point
// (kNoise for outliers), clusters numbered from 0.
std::vector<int> cluster_topic(std::span<const Embedding> points,
                               const HdbscanParams& params,
                               kernels::Exec exec = kernels::Exec::parallel);

struct ResolverFrequency {
  std::string resolver;
  double frequency = 0.0;  // P(resolver | list)
  bool operator==(const ResolverFrequency&) const = default;
};

struct ResolverList {
  std::string list_id;
  std::vector<ResolverFrequency> member_resolvers;  // sorted by resolver
  std::vector<std::string> member_ticket_ids;
  std::size_t source_topic = 0;

  bool operator==(const ResolverList&) const = default;
};

// HDBSCAN result for the tickets of one topic. `tickets` indexes the ticket
// span given to build_resolver_lists; `labels` is aligned with it.
struct TopicClusters {
  std::size_t topic = 0;
  std::vector<std::size_t> tickets;
  std::vector<int> labels;
};

struct ResolverListSet {
  std::vector<ResolverList> lists;
  // Per ticket: index into `lists`, empty for noise and unclustered tickets.
  std::vector<std::optional<std::size_t>> ticket_list;
};

// One list per (topic, cluster) pair with at least `min_members` tickets,
// ordered by topic then cluster label. Smaller clusters are treated as
// noise.
ResolverListSet build_resolver_lists(std::span<const TopicClusters> clusters,
                                     std::span<const CleanTicket> tickets,
                                     std::size_t min_members = 1);

// P(R_j) = sum_k P(R_j | L_k) P(L_k). `list_probs` is indexed by
// `list_vocabulary`, whose labels must all be list ids in `lists`
// (InvalidArgument otherwise). Result is sorted by resolver.
std::vector<LabeledProb> list_to_resolver_probs(
    std::span<const double> list_probs, const LabelVocabulary& list_vocabulary,
    std::span<const ResolverList> lists);

std::string serialize(const TopicModel& model);
TopicModel deserialize_topic_model(std::string_view bytes);
std::string serialize(std::span<const ResolverList> lists);
std::vector<ResolverList> deserialize_resolver_lists(std::string_view bytes);

}  // namespace triage
