#pragma once

// Similar-ticket resolver model: neighbour distances are rescaled, each
// resolver's tickets are discounted geometrically by rank, the inverted
// scaled distances are summed per resolver, and a softmax turns the scores
// into probabilities.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/ann_index.hpp"
#include "triage/softmax_head.hpp"

namespace triage {

struct ScorerParams {
  double theta_min = 0.0;
  double theta_max = 1.0;
  double beta = 0.5;  // rank discount, in (0, 1)

  bool valid() const noexcept {
    return theta_min < theta_max && beta > 0.0 && beta < 1.0;
  }
  bool operator==(const ScorerParams&) const = default;
};

// Lower clamp for scaled distances; keeps 1 / d_scaled bounded.
constexpr double kScaledDistanceFloor = 1e-3;
// Probability charged to a true resolver absent from the neighbours.
constexpr double kAbsentResolverFloor = 1e-9;

// (d - theta_min) / (theta_max - theta_min), clamped below at
// kScaledDistanceFloor and unbounded above.
double scale_distance(double distance, const ScorerParams& params);

struct ScoredNeighbor {
  Neighbor neighbor;
  double scaled_distance = 0.0;
  std::size_t rank = 0;  // zero-based among the same resolver's tickets
  double weight = 1.0;   // beta^rank
};

// Sorted by ascending distance (ties by ticket id) regardless of input order.
std::vector<ScoredNeighbor> score_neighbors(std::span<const Neighbor> neighbors,
                                            const ScorerParams& params);

struct ResolverScore {
  std::string resolver;
  double score = 0.0;
  bool operator==(const ResolverScore&) const = default;
};

// s_j = sum over resolver j's neighbours of beta^r / d_scaled. Sorted by
// resolver; empty input gives an empty list.
std::vector<ResolverScore> resolver_scores(std::span<const Neighbor> neighbors,
                                           const ScorerParams& params);

// Softmax over the scores, same order as the input.
std::vector<LabeledProb> scores_to_probs(std::span<const ResolverScore> scores);

// Upper bound on any resolver's summed rank weight: 1 / (1 - beta).
inline double rank_weight_bound(double beta) { return 1.0 / (1.0 - beta); }

struct ScorerExample {
  std::vector<Neighbor> neighbors;
  std::string true_resolver;
};

// Mean negative log probability of the true resolver.
double scorer_log_loss(std::span<const ScorerExample> examples,
                       const ScorerParams& params);

struct ScorerSearch {
  std::vector<double> theta_min_grid{0.0, 0.1, 0.2, 0.3};
  std::vector<double> theta_max_grid{0.8, 1.0, 1.2, 1.5, 2.0};
  std::vector<double> beta_grid{0.3, 0.5, 0.7, 0.9};
  bool refine = true;
  std::size_t max_iterations = 200;
};

struct ScorerFitReport {
  ScorerParams grid_best;
  double grid_loss = 0.0;
  double final_loss = 0.0;
  std::size_t grid_points = 0;
  bool refinement_used = false;
};

// Grid search followed by Nelder-Mead refinement inside the feasible region.
// Refinement is kept only if it stays feasible and does not lose to the
// grid optimum.
ScorerParams fit_params(std::span<const ScorerExample> examples,
                        const ScorerSearch& search = {},
                        ScorerFitReport* report = nullptr);

std::string serialize(const ScorerParams& params);
ScorerParams deserialize_scorer(std::string_view bytes);

}  // namespace triage
