#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "triage/ann_index.hpp"
#include "triage/corpus.hpp"
#include "triage/discovery.hpp"
#include "triage/encoder.hpp"
#include "triage/ensemble.hpp"
#include "triage/similar_scorer.hpp"
#include "triage/softmax_head.hpp"

namespace triage {

struct PipelineConfig {
  std::uint64_t seed = 7;
  std::uint32_t encoder_dimension = 512;
  HeadHyper head;
  LdaParams lda{64, 0.0, 0.01, 300, 0};
  HdbscanParams hdbscan;
  // Topics larger than this are clustered in seeded chunks of at most this
  // many tickets, which bounds the quadratic clustering cost.
  std::size_t topic_size_cap = 2000;
  ForestParams forest;
  std::size_t ann_search_budget = 2000;
  std::size_t n_neighbors = 500;  // neighbours fed to the similar-ticket scorer
  ScorerSearch scorer;
  std::size_t ensemble_steps = 20;

  // Missing keys keep their defaults; unknown keys are a SchemaError.
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Hash of the canonical JSON form.
  std::uint64_t hash() const;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct BundleManifest {
  std::uint32_t format_version = 1;
  std::string created_at;  // UTC RFC-3339
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t config_hash = 0;
  std::optional<std::uint64_t> corpus_fingerprint;
  std::vector<StageTiming> stages;
  std::vector<std::string> absent_members;
};

// Everything inference needs. Immutable once built or loaded; share it by
// const reference across threads.
struct ModelBundle {
  PipelineConfig config;
  BundleManifest manifest;
  EncoderModel encoder;
  SoftmaxHead group_head;
  SoftmaxHead resolver_head;
  std::optional<SoftmaxHead> list_head;
  TopicModel topics;
  std::vector<ResolverList> lists;
  AnnIndex ann;
  std::vector<std::string> snippets;  // aligned with the ANN items
  GroupResolverPrior prior;
  ScorerParams scorer;
  EnsembleWeights weights;

  const LabelVocabulary& groups() const { return group_head.vocabulary(); }
  const LabelVocabulary& resolvers() const { return resolver_head.vocabulary(); }
  std::array<bool, kResolverModels> active_models() const {
    return {true, list_head.has_value(), true, true};
  }
  // "v<format>-<config hash>-<created_at>"; changes with every training run.
  std::string version() const;
  std::size_t ann_position(std::string_view ticket_id) const;
  void index_ids();

 private:
  std::unordered_map<std::string, std::size_t> ann_position_;
};

// Called after each stage with the stage name and its wall time.
using ProgressFn = std::function<void(std::string_view stage, double seconds)>;

struct TrainOptions {
  ProgressFn progress;
  // Fingerprint of the unsplit corpus, recorded so evaluation can recover
  // the test split.
  std::optional<std::uint64_t> corpus_fingerprint;
};

// Training stage names in execution order.
extern const std::vector<std::string_view> kTrainStages;

// Runs every stage in order. A failing stage throws StageError naming it;
// nothing is written to disk.
ModelBundle train_pipeline(const DatasetSplit& dataset, const PipelineConfig& config,
                           const TrainOptions& options = {});

// The four resolver-model outputs for one ticket, aligned on the global
// resolver vocabulary.
struct ModelOutputs {
  ProbVector group_probs;
  AlignedOutputs resolver;
  std::vector<Neighbor> neighbors;  // ascending distance
  std::array<double, kResolverModels> model_seconds{};
  double group_seconds = 0.0;
  double ann_seconds = 0.0;
};

ModelOutputs model_outputs(const ModelBundle& bundle, std::span<const float> embedding,
                           std::size_t neighbors);

struct SimilarTicket {
  std::string id;
  std::string snippet;
  std::string resolver;
  double distance = 0.0;
  bool operator==(const SimilarTicket&) const = default;
};

struct SuggestTimings {
  double encode_ms = 0.0;
  double group_ms = 0.0;
  double resolver_ms = 0.0;
  double ann_ms = 0.0;
  double total_ms = 0.0;
};

struct Suggestions {
  Ranking groups;
  Ranking resolvers;
  std::vector<SimilarTicket> similar;
  SuggestTimings timings;

  // Everything except timings.
  bool same_results(const Suggestions& o) const {
    return groups == o.groups && resolvers == o.resolvers && similar == o.similar;
  }
};

struct SuggestRequest {
  std::size_t k_group = 3;
  std::size_t k_resolver = 5;
  std::size_t n_similar = 10;
};

// k values are clamped to the vocabulary sizes. Throws EmptyDescriptionError
// when the text has no tokens and InvalidArgument for k_group or k_resolver
// of 0.
Suggestions suggest(const ModelBundle& bundle, std::string_view description,
                    const SuggestRequest& request = {});

// Bundle directory: manifest.json plus one binary file per member. Written
// to a sibling temporary directory first, then moved into place.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
// Throws MissingMemberError, VersionError, ConfigHashError or ChecksumError
// for the corresponding defect.
ModelBundle load_bundle(const std::filesystem::path& dir);

// Bundle member names and their files.
extern const std::vector<std::pair<std::string_view, std::string_view>> kBundleMembers;

// Re-fits only the similar-ticket scorer on `validation`; every other
// member is left untouched.
void refit_scorer(ModelBundle& bundle, std::span<const CleanTicket> validation);

}  // namespace triage
