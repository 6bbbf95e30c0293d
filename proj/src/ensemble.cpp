#include "triage/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "triage/errors.hpp"

namespace triage {
namespace {

constexpr std::string_view kPriorMagic = "TDAPRI1";
constexpr std::string_view kWeightsMagic = "TDAENS1";
constexpr std::uint32_t kVersion = 1;

// Rank of `truth` in `v` under descending-probability, lower-index-first
// ordering.
std::size_t rank_of(std::span<const double> v, std::size_t truth) {
  const double p = v[truth];
  std::size_t rank = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > p || (v[i] == p && i < truth)) ++rank;
  }
  return rank;
}

}  // namespace

GroupResolverPrior fit_group_prior(std::span<const CleanTicket> train) {
  if (train.empty()) throw InvalidArgument("fit_group_prior: no tickets");
  std::vector<std::string> groups, resolvers;
  for (const auto& t : train) {
    groups.push_back(t.group);
    resolvers.push_back(t.resolver);
  }
  GroupResolverPrior prior;
  prior.groups = LabelVocabulary::from_observed(groups);
  prior.resolvers = LabelVocabulary::from_observed(resolvers);
  const std::size_t R = prior.resolvers.size();
  prior.matrix.assign(prior.groups.size() * R, 0.0);
  std::vector<double> totals(prior.groups.size(), 0.0);
  for (const auto& t : train) {
    const std::size_t g = prior.groups.at(t.group);
    prior.matrix[g * R + prior.resolvers.at(t.resolver)] += 1.0;
    totals[g] += 1.0;
  }
  for (std::size_t g = 0; g < prior.groups.size(); ++g) {
    for (std::size_t r = 0; r < R; ++r) prior.matrix[g * R + r] /= totals[g];
  }
  return prior;
}

ProbVector group_based_probs(std::span<const double> group_probs,
                             const LabelVocabulary& group_vocabulary,
                             const GroupResolverPrior& prior) {
  if (!(group_vocabulary == prior.groups) || group_probs.size() != prior.groups.size()) {
    throw InvalidArgument("group_based_probs: group vocabulary does not match the prior");
  }
  ProbVector out(prior.resolvers.size(), 0.0);
  for (std::size_t g = 0; g < group_probs.size(); ++g) {
    const double pg = group_probs[g];
    if (pg == 0.0) continue;
    const auto row = prior.row(g);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += row[r] * pg;
  }
  return out;
}

ProbVector align_probs(std::span<const LabeledProb> output, const LabelVocabulary& global) {
  ProbVector out(global.size(), 0.0);
  for (const auto& lp : output) {
    const auto i = global.find(lp.label);
    if (!i) throw InvalidArgument("align_probs: unknown resolver '" + lp.label + "'");
    out[*i] += lp.probability;
  }
  return out;
}

ProbVector align_probs(std::span<const double> output, const LabelVocabulary& local,
                       const LabelVocabulary& global) {
  if (output.size() != local.size()) {
    throw InvalidArgument("align_probs: output length does not match its vocabulary");
  }
  if (local == global) return ProbVector(output.begin(), output.end());
  ProbVector out(global.size(), 0.0);
  for (std::size_t i = 0; i < output.size(); ++i) {
    const auto j = global.find(local.label(i));
    if (!j) throw InvalidArgument("align_probs: unknown resolver '" + local.label(i) + "'");
    out[*j] += output[i];
  }
  return out;
}

bool EnsembleWeights::valid() const noexcept {
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= 1e-9;
}

ProbVector ensemble_probs(const AlignedOutputs& outputs, const EnsembleWeights& weights) {
  if (!weights.valid()) throw InvalidArgument("ensemble_probs: weights are not on the simplex");
  const std::size_t n = outputs[0].size();
  for (const auto& o : outputs) {
    if (o.size() != n) throw InvalidArgument("ensemble_probs: model outputs differ in length");
  }
  ProbVector out(n, 0.0);
  for (std::size_t j = 0; j < kResolverModels; ++j) {
    const double wj = weights.w[j];
    if (wj == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) out[i] += wj * outputs[j][i];
  }
  return out;
}

std::vector<EnsembleWeights> simplex_grid(std::size_t steps,
                                          std::array<bool, kResolverModels> active) {
  if (steps == 0) throw InvalidArgument("simplex_grid: steps must be positive");
  if (std::none_of(active.begin(), active.end(), [](bool b) { return b; })) {
    throw InvalidArgument("simplex_grid: no active model");
  }
  std::vector<EnsembleWeights> out;
  const double unit = 1.0 / static_cast<double>(steps);
  for (std::size_t a = 0; a <= steps; ++a) {
    for (std::size_t b = 0; a + b <= steps; ++b) {
      for (std::size_t c = 0; a + b + c <= steps; ++c) {
        const std::array<std::size_t, kResolverModels> u{a, b, c, steps - a - b - c};
        bool ok = true;
        for (std::size_t j = 0; j < kResolverModels; ++j) ok = ok && (active[j] || u[j] == 0);
        if (!ok) continue;
        EnsembleWeights w;
        for (std::size_t j = 0; j < kResolverModels; ++j) w.w[j] = static_cast<double>(u[j]) * unit;
        out.push_back(w);
      }
    }
  }
  return out;
}

double ensemble_log_loss(std::span<const EnsembleExample> examples,
                         const EnsembleWeights& weights) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) {
    double p = 0.0;
    for (std::size_t j = 0; j < kResolverModels; ++j) p += weights.w[j] * ex.outputs[j][ex.truth];
    total += -std::log(std::max(p, kEnsembleProbFloor));
  }
  return total / static_cast<double>(examples.size());
}

double ensemble_top_k(std::span<const EnsembleExample> examples,
                      const EnsembleWeights& weights, std::size_t k) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    if (rank_of(ensemble_probs(ex.outputs, weights), ex.truth) < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

EnsembleWeights fit_weights(std::span<const EnsembleExample> examples,
                            std::array<bool, kResolverModels> active, std::size_t steps,
                            EnsembleFitReport* report) {
  if (examples.empty()) throw InvalidArgument("fit_weights: no validation examples");
  for (const auto& ex : examples) {
    for (const auto& o : ex.outputs) {
      if (ex.truth >= o.size()) throw InvalidArgument("fit_weights: truth index out of range");
    }
  }
  // Only p_truth enters the loss, so the grid sweep needs 4 numbers per
  // example; top-5 is evaluated only to break ties.
  const std::size_t n = examples.size();
  std::vector<std::array<double, kResolverModels>> p_true(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kResolverModels; ++j) p_true[i][j] = examples[i].outputs[j][examples[i].truth];
  }
  auto loss_of = [&](const EnsembleWeights& w) {
    double total = 0.0;
    for (const auto& p : p_true) {
      double q = 0.0;
      for (std::size_t j = 0; j < kResolverModels; ++j) q += w.w[j] * p[j];
      total += -std::log(std::max(q, kEnsembleProbFloor));
    }
    return total / static_cast<double>(n);
  };

  const auto grid = simplex_grid(steps, active);
  EnsembleWeights best = grid.front();
  double best_loss = loss_of(best);
  double best_top5 = -1.0;  // computed lazily
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const double loss = loss_of(grid[g]);
    const double tol = 1e-12 * std::max(1.0, std::abs(best_loss));
    if (loss < best_loss - tol) {
      best = grid[g];
      best_loss = loss;
      best_top5 = -1.0;
    } else if (loss <= best_loss + tol) {
      if (best_top5 < 0.0) best_top5 = ensemble_top_k(examples, best, 5);
      const double top5 = ensemble_top_k(examples, grid[g], 5);
      if (top5 > best_top5) {
        best = grid[g];
        best_loss = loss;
        best_top5 = top5;
      }
    }
  }
  if (report) {
    report->log_loss = best_loss;
    report->top5 = best_top5 >= 0.0 ? best_top5 : ensemble_top_k(examples, best, 5);
    report->grid_points = grid.size();
    for (std::size_t j = 0; j < kResolverModels; ++j) {
      EnsembleWeights one{{0.0, 0.0, 0.0, 0.0}};
      one.w[j] = 1.0;
      report->single_model_loss[j] = loss_of(one);
    }
  }
  return best;
}

std::string serialize(const GroupResolverPrior& prior) {
  io::BinaryWriter w;
  w.magic(kPriorMagic);
  w.u32(kVersion);
  write_vocabulary(w, prior.groups);
  write_vocabulary(w, prior.resolvers);
  w.f64s(prior.matrix);
  return std::move(w).take();
}

GroupResolverPrior deserialize_prior(std::string_view bytes) {
  io::BinaryReader r(bytes, "group prior");
  r.expect_magic(kPriorMagic);
  r.expect_version(kVersion);
  GroupResolverPrior prior;
  prior.groups = read_vocabulary(r);
  prior.resolvers = read_vocabulary(r);
  prior.matrix = r.f64s();
  r.expect_end();
  if (prior.matrix.size() != prior.groups.size() * prior.resolvers.size()) {
    throw FormatError("group prior: matrix shape does not match vocabularies");
  }
  return prior;
}

std::string serialize(const EnsembleWeights& weights) {
  io::BinaryWriter w;
  w.magic(kWeightsMagic);
  w.u32(kVersion);
  for (double x : weights.w) w.f64(x);
  return std::move(w).take();
}

EnsembleWeights deserialize_weights(std::string_view bytes) {
  io::BinaryReader r(bytes, "ensemble weights");
  r.expect_magic(kWeightsMagic);
  r.expect_version(kVersion);
  EnsembleWeights weights;
  for (double& x : weights.w) x = r.f64();
  r.expect_end();
  if (!weights.valid()) throw FormatError("ensemble weights: not on the simplex");
  return weights;
}

}  // namespace triage
