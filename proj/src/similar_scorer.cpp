#include "triage/similar_scorer.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include "triage/binary_io.hpp"
#include "triage/errors.hpp"

namespace triage {
namespace {

constexpr std::string_view kMagic = "TDASCR1";
constexpr std::uint32_t kVersion = 1;

// Neighbour order, ranks and resolver grouping do not depend on the
// parameters, so fitting precomputes them once per example.
struct Prepared {
  std::vector<double> distance;       // ascending
  std::vector<std::uint32_t> group;   // resolver slot, slots sorted by name
  std::vector<std::uint32_t> rank;
  std::size_t slots = 0;
  std::optional<std::uint32_t> truth;
};

std::vector<Prepared> prepare(std::span<const ScorerExample> examples) {
  const ScorerParams unit{};
  std::vector<Prepared> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    Prepared p;
    const auto scored = score_neighbors(ex.neighbors, unit);
    std::map<std::string_view, std::uint32_t> slot;
    for (const auto& s : scored) slot.emplace(s.neighbor.resolver, 0);
    std::uint32_t next = 0;
    for (auto& [name, idx] : slot) idx = next++;
    p.slots = slot.size();
    for (const auto& s : scored) {
      p.distance.push_back(s.neighbor.distance);
      p.group.push_back(slot.at(s.neighbor.resolver));
      p.rank.push_back(static_cast<std::uint32_t>(s.rank));
    }
    if (auto it = slot.find(ex.true_resolver); it != slot.end()) p.truth = it->second;
    out.push_back(std::move(p));
  }
  return out;
}

double prepared_loss(std::span<const Prepared> examples, const ScorerParams& params) {
  if (examples.empty()) return 0.0;
  std::vector<double> score;
  double total = 0.0;
  for (const auto& ex : examples) {
    if (!ex.truth) {
      total += -std::log(kAbsentResolverFloor);
      continue;
    }
    score.assign(ex.slots, 0.0);
    for (std::size_t i = 0; i < ex.distance.size(); ++i) {
      score[ex.group[i]] += std::pow(params.beta, static_cast<double>(ex.rank[i])) /
                            scale_distance(ex.distance[i], params);
    }
    const double top = *std::max_element(score.begin(), score.end());
    double z = 0.0;
    for (double v : score) z += std::exp(v - top);
    const double p = std::exp(score[*ex.truth] - top) / z;
    total += -std::log(std::max(p, kAbsentResolverFloor));
  }
  return total / static_cast<double>(examples.size());
}

double objective(const gsl_vector* x, void* data) {
  const auto* examples = static_cast<const std::vector<Prepared>*>(data);
  const ScorerParams p{gsl_vector_get(x, 0), gsl_vector_get(x, 1), gsl_vector_get(x, 2)};
  if (!p.valid()) return std::numeric_limits<double>::infinity();
  return prepared_loss(*examples, p);
}

}  // namespace

double scale_distance(double distance, const ScorerParams& params) {
  const double scaled = (distance - params.theta_min) / (params.theta_max - params.theta_min);
  return std::max(scaled, kScaledDistanceFloor);
}

std::vector<ScoredNeighbor> score_neighbors(std::span<const Neighbor> neighbors,
                                            const ScorerParams& params) {
  std::vector<ScoredNeighbor> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors) out.push_back({n, scale_distance(n.distance, params), 0, 1.0});
  std::sort(out.begin(), out.end(), [](const ScoredNeighbor& a, const ScoredNeighbor& b) {
    if (a.neighbor.distance != b.neighbor.distance) return a.neighbor.distance < b.neighbor.distance;
    return a.neighbor.ticket_id < b.neighbor.ticket_id;
  });
  std::map<std::string_view, std::size_t> seen;
  for (auto& s : out) {
    const std::size_t r = seen[s.neighbor.resolver]++;
    s.rank = r;
    s.weight = std::pow(params.beta, static_cast<double>(r));
  }
  return out;
}

std::vector<ResolverScore> resolver_scores(std::span<const Neighbor> neighbors,
                                           const ScorerParams& params) {
  std::map<std::string, double> score;
  for (const auto& s : score_neighbors(neighbors, params)) {
    score[s.neighbor.resolver] += s.weight / s.scaled_distance;
  }
  std::vector<ResolverScore> out;
  out.reserve(score.size());
  for (auto& [resolver, s] : score) out.push_back({resolver, s});
  return out;
}

std::vector<LabeledProb> scores_to_probs(std::span<const ResolverScore> scores) {
  std::vector<double> z;
  z.reserve(scores.size());
  for (const auto& s : scores) z.push_back(s.score);
  kernels::softmax_inplace(z);
  std::vector<LabeledProb> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({scores[i].resolver, z[i]});
  return out;
}

double scorer_log_loss(std::span<const ScorerExample> examples,
                       const ScorerParams& params) {
  return prepared_loss(prepare(examples), params);
}

ScorerParams fit_params(std::span<const ScorerExample> examples,
                        const ScorerSearch& search, ScorerFitReport* report) {
  if (examples.empty()) throw InvalidArgument("fit_params: no validation examples");
  const auto prepared = prepare(examples);
  ScorerFitReport local;
  ScorerParams best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double tmin : search.theta_min_grid) {
    for (double tmax : search.theta_max_grid) {
      for (double beta : search.beta_grid) {
        const ScorerParams p{tmin, tmax, beta};
        if (!p.valid()) continue;
        ++local.grid_points;
        const double loss = prepared_loss(prepared, p);
        if (loss < best_loss) {
          best_loss = loss;
          best = p;
        }
      }
    }
  }
  if (local.grid_points == 0) throw InvalidArgument("fit_params: grid has no feasible point");
  local.grid_best = best;
  local.grid_loss = best_loss;
  local.final_loss = best_loss;

  if (search.refine) {
    gsl_multimin_function fn;
    fn.n = 3;
    fn.f = &objective;
    fn.params = const_cast<std::vector<Prepared>*>(&prepared);
    gsl_vector* x = gsl_vector_alloc(3);
    gsl_vector* step = gsl_vector_alloc(3);
    gsl_vector_set(x, 0, best.theta_min);
    gsl_vector_set(x, 1, best.theta_max);
    gsl_vector_set(x, 2, best.beta);
    // Initial steps stay inside the feasible region from any grid point.
    gsl_vector_set(step, 0, 0.05);
    gsl_vector_set(step, 1, 0.1);
    gsl_vector_set(step, 2, std::min(0.05, 0.5 * (1.0 - best.beta)));
    gsl_multimin_fminimizer* solver =
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
    gsl_multimin_fminimizer_set(solver, &fn, x, step);
    for (std::size_t it = 0; it < search.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), 1e-5) == GSL_SUCCESS) break;
    }
    const gsl_vector* xm = gsl_multimin_fminimizer_x(solver);
    const ScorerParams refined{gsl_vector_get(xm, 0), gsl_vector_get(xm, 1), gsl_vector_get(xm, 2)};
    const double refined_loss = gsl_multimin_fminimizer_minimum(solver);
    gsl_multimin_fminimizer_free(solver);
    gsl_vector_free(step);
    gsl_vector_free(x);
    if (refined.valid() && std::isfinite(refined_loss) && refined_loss <= best_loss) {
      best = refined;
      local.final_loss = refined_loss;
      local.refinement_used = true;
    }
  }
  if (report) *report = local;
  return best;
}

std::string serialize(const ScorerParams& params) {
  io::BinaryWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.f64(params.theta_min);
  w.f64(params.theta_max);
  w.f64(params.beta);
  return std::move(w).take();
}

ScorerParams deserialize_scorer(std::string_view bytes) {
  io::BinaryReader r(bytes, "scorer params");
  r.expect_magic(kMagic);
  r.expect_version(kVersion);
  ScorerParams p;
  p.theta_min = r.f64();
  p.theta_max = r.f64();
  p.beta = r.f64();
  r.expect_end();
  if (!p.valid()) throw FormatError("scorer params: out of range");
  return p;
}

}  // namespace triage
