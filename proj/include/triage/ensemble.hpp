#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/softmax_head.hpp"

namespace triage {

// Resolver models combined by the ensemble, in weight order.
enum class ResolverModel : std::size_t { resolver = 0, resolver_list = 1, group = 2, similar = 3 };
constexpr std::size_t kResolverModels = 4;
constexpr std::array<std::string_view, kResolverModels> kResolverModelNames{
    "resolver", "resolver-list", "group", "similar"};

// Row-normalized P(resolver | group) counts over the training tickets.
struct GroupResolverPrior {
  LabelVocabulary groups;
  LabelVocabulary resolvers;
  std::vector<double> matrix;  // groups x resolvers, row-major

  std::span<const double> row(std::size_t g) const {
    return std::span<const double>(matrix).subspan(g * resolvers.size(), resolvers.size());
  }
  bool operator==(const GroupResolverPrior&) const = default;
};

// Vocabularies are the sorted groups and resolvers present in `train`.
GroupResolverPrior fit_group_prior(std::span<const CleanTicket> train);

// P(R_i) = sum_j P(R_i | G_j) P(G_j). `group_vocabulary` must equal the
// prior's group vocabulary (InvalidArgument otherwise). Indexed by the
// prior's resolver vocabulary.
ProbVector group_based_probs(std::span<const double> group_probs,
                             const LabelVocabulary& group_vocabulary,
                             const GroupResolverPrior& prior);

// Re-indexes a model output onto the global vocabulary. Labels missing from
// the output get 0 and nothing is renormalized. InvalidArgument names any
// label the global vocabulary lacks.
ProbVector align_probs(std::span<const LabeledProb> output,
                       const LabelVocabulary& global);
ProbVector align_probs(std::span<const double> output,
                       const LabelVocabulary& local,
                       const LabelVocabulary& global);

using AlignedOutputs = std::array<ProbVector, kResolverModels>;

struct EnsembleWeights {
  std::array<double, kResolverModels> w{1.0, 0.0, 0.0, 0.0};

  // Non-negative and summing to 1 within 1e-9.
  bool valid() const noexcept;
  bool operator==(const EnsembleWeights&) const = default;
};

// sum_j w_j * outputs[j]. Throws InvalidArgument for ragged inputs or
// invalid weights.
ProbVector ensemble_probs(const AlignedOutputs& outputs, const EnsembleWeights& weights);

// Every weight vector with entries in multiples of 1/steps that sums to 1,
// in ascending lexicographic order; entries with active[j] == false stay 0.
std::vector<EnsembleWeights> simplex_grid(std::size_t steps,
                                          std::array<bool, kResolverModels> active = {true, true, true, true});

struct EnsembleExample {
  AlignedOutputs outputs;
  std::size_t truth = 0;  // index into the global resolver vocabulary
};

constexpr double kEnsembleProbFloor = 1e-9;

// Mean -log(max(p_truth, floor)).
double ensemble_log_loss(std::span<const EnsembleExample> examples,
                         const EnsembleWeights& weights);
// Share of examples whose truth ranks in the top `k` of the combined
// vector (ties to the lower index, as in top_k).
double ensemble_top_k(std::span<const EnsembleExample> examples,
                      const EnsembleWeights& weights, std::size_t k);

struct EnsembleFitReport {
  double log_loss = 0.0;
  double top5 = 0.0;
  std::array<double, kResolverModels> single_model_loss{};
  std::size_t grid_points = 0;
};

// Exhaustive grid search at resolution 1/steps minimizing log-loss. Losses
// equal within 1e-12 (relative) are broken by higher top-5 accuracy, then
// by the lexicographically smallest weights.
EnsembleWeights fit_weights(std::span<const EnsembleExample> examples,
                            std::array<bool, kResolverModels> active = {true, true, true, true},
                            std::size_t steps = 20, EnsembleFitReport* report = nullptr);

std::string serialize(const GroupResolverPrior& prior);
GroupResolverPrior deserialize_prior(std::string_view bytes);
std::string serialize(const EnsembleWeights& weights);
EnsembleWeights deserialize_weights(std::string_view bytes);

}  // namespace triage
