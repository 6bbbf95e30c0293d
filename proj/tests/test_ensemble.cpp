#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "triage/ensemble.hpp"
#include "triage/errors.hpp"

using namespace triage;

namespace {

CleanTicket ticket(std::string group, std::string resolver) {
  CleanTicket t;
  t.group = std::move(group);
  t.resolver = std::move(resolver);
  return t;
}

ProbVector random_dist(std::size_t n, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.5);
  ProbVector p(n);
  double s = 0;
  for (auto& x : p) s += (x = g(rng) + 1e-12);
  for (auto& x : p) x /= s;
  return p;
}

// Model 0 is informative, the rest are noise.
std::vector<EnsembleExample> examples(std::size_t n, std::size_t resolvers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<EnsembleExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    EnsembleExample e;
    e.truth = i % resolvers;
    for (auto& o : e.outputs) o = random_dist(resolvers, rng);
    for (auto& x : e.outputs[0]) x *= 0.5;
    e.outputs[0][e.truth] += 0.5;
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST(GroupPrior, RowNormalizedCounts) {
  const std::vector<CleanTicket> train{ticket("A", "R1"), ticket("A", "R1"), ticket("A", "R2"), ticket("B", "R2")};
  const auto prior = fit_group_prior(train);
  EXPECT_EQ(prior.groups.labels(), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(prior.resolvers.labels(), (std::vector<std::string>{"R1", "R2"}));
  EXPECT_NEAR(prior.row(0)[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(prior.row(0)[1], 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(prior.row(1)[0], 0.0);
  EXPECT_DOUBLE_EQ(prior.row(1)[1], 1.0);
  EXPECT_EQ(deserialize_prior(serialize(prior)), prior);
}

TEST(GroupPrior, MarginalOverGroupProbabilities) {
  const std::vector<CleanTicket> train{ticket("A", "R1"), ticket("A", "R1"), ticket("A", "R2"), ticket("B", "R2")};
  const auto prior = fit_group_prior(train);
  const std::vector<double> pg{0.7, 0.3};
  const auto p = group_based_probs(pg, prior.groups, prior);
  EXPECT_NEAR(p[0], 0.7 * 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p[1], 0.7 / 3.0 + 0.3, 1e-12);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  EXPECT_THROW(group_based_probs(pg, LabelVocabulary({"B", "A"}), prior), InvalidArgument);
}

TEST(AlignProbs, ReindexesAndZeroFills) {
  const LabelVocabulary global({"A", "B", "C"});
  const std::vector<LabeledProb> sparse{{"C", 0.6}, {"A", 0.4}};
  EXPECT_EQ(align_probs(sparse, global), (ProbVector{0.4, 0.0, 0.6}));
  const std::vector<double> dense{0.25, 0.75};
  EXPECT_EQ(align_probs(dense, LabelVocabulary({"B", "A"}), global), (ProbVector{0.75, 0.25, 0.0}));
  const std::vector<LabeledProb> unknown{{"Z", 1.0}};
  EXPECT_THROW(align_probs(unknown, global), InvalidArgument);
}

TEST(EnsembleProbs, HandCombination) {
  AlignedOutputs o{ProbVector{1, 0}, ProbVector{0, 1}, ProbVector{0.5, 0.5}, ProbVector{1, 0}};
  const EnsembleWeights w{{0.4, 0.3, 0.2, 0.1}};
  const auto p = ensemble_probs(o, w);
  EXPECT_NEAR(p[0], 0.4 + 0.1 + 0.1, 1e-12);
  EXPECT_NEAR(p[1], 0.3 + 0.1, 1e-12);
  EXPECT_THROW(ensemble_probs(o, EnsembleWeights{{0.5, 0.5, 0.5, 0.0}}), InvalidArgument);
  o[2] = ProbVector{1.0};
  EXPECT_THROW(ensemble_probs(o, w), InvalidArgument);
}

TEST(EnsembleProbs, SumsToOneForValidInputs) {
  std::mt19937_64 rng(1);
  for (const auto& w : simplex_grid(5)) {
    AlignedOutputs o;
    for (auto& x : o) x = random_dist(6, rng);
    const auto p = ensemble_probs(o, w);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(SimplexGrid, CountOrderAndMasking) {
  const auto g = simplex_grid(20);
  EXPECT_EQ(g.size(), 1771u);  // C(23, 3)
  for (const auto& w : g) EXPECT_TRUE(w.valid());
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1].w, g[i].w);
  const auto masked = simplex_grid(20, {true, false, true, true});
  EXPECT_EQ(masked.size(), 231u);  // C(22, 2)
  for (const auto& w : masked) EXPECT_EQ(w.w[1], 0.0);
  EXPECT_EQ(simplex_grid(1).size(), 4u);
}

TEST(FitWeights, NoWorseThanAnySingleModel) {
  const auto ex = examples(200, 8, 2);
  EnsembleFitReport rep;
  const auto w = fit_weights(ex, {true, true, true, true}, 20, &rep);
  EXPECT_TRUE(w.valid());
  EXPECT_EQ(rep.grid_points, 1771u);
  EXPECT_NEAR(rep.log_loss, ensemble_log_loss(ex, w), 1e-12);
  for (std::size_t j = 0; j < kResolverModels; ++j) {
    EnsembleWeights vertex{{0, 0, 0, 0}};
    vertex.w[j] = 1.0;
    EXPECT_NEAR(rep.single_model_loss[j], ensemble_log_loss(ex, vertex), 1e-12);
    EXPECT_LE(rep.log_loss, rep.single_model_loss[j]);
  }
  EXPECT_GT(w.w[0], 0.5);
  for (const auto& g : simplex_grid(20)) EXPECT_LE(rep.log_loss, ensemble_log_loss(ex, g) + 1e-12);
}

TEST(FitWeights, InactiveModelStaysAtZero) {
  auto ex = examples(100, 5, 3);
  for (auto& e : ex) e.outputs[1] = ProbVector(5, 0.0), e.outputs[1][e.truth] = 1.0;  // a perfect model
  const auto w = fit_weights(ex, {true, false, true, true}, 10);
  EXPECT_EQ(w.w[1], 0.0);
  EXPECT_TRUE(w.valid());
  EXPECT_EQ(fit_weights(ex, {true, true, true, true}, 10).w[1], 1.0);
}

TEST(FitWeights, IdenticalModelsPickLexicographicallySmallest) {
  auto ex = examples(50, 4, 4);
  for (auto& e : ex) e.outputs = {e.outputs[0], e.outputs[0], e.outputs[0], e.outputs[0]};
  EXPECT_EQ(fit_weights(ex, {true, true, true, true}, 4).w, (std::array<double, 4>{0, 0, 0, 1}));
}

TEST(FitWeights, PermutingModelsPermutesWeights) {
  const auto ex = examples(120, 6, 5);
  auto swapped = ex;
  for (auto& e : swapped) std::swap(e.outputs[0], e.outputs[3]);
  const auto a = fit_weights(ex, {true, true, true, true}, 10);
  const auto b = fit_weights(swapped, {true, true, true, true}, 10);
  EXPECT_NEAR(ensemble_log_loss(ex, a), ensemble_log_loss(swapped, b), 1e-12);
  EXPECT_DOUBLE_EQ(a.w[0], b.w[3]);
}

TEST(EnsembleMetrics, LossAndTopK) {
  std::vector<EnsembleExample> ex(2);
  ex[0].outputs = {ProbVector{0.5, 0.5, 0}, ProbVector(3, 0.0), ProbVector(3, 0.0), ProbVector(3, 0.0)};
  ex[0].truth = 1;  // tie with index 0, which wins
  ex[1].outputs = {ProbVector{0, 0, 1}, ProbVector(3, 0.0), ProbVector(3, 0.0), ProbVector(3, 0.0)};
  ex[1].truth = 0;
  const EnsembleWeights w;
  EXPECT_NEAR(ensemble_log_loss(ex, w), (-std::log(0.5) - std::log(kEnsembleProbFloor)) / 2, 1e-12);
  EXPECT_DOUBLE_EQ(ensemble_top_k(ex, w, 1), 0.0);
  EXPECT_DOUBLE_EQ(ensemble_top_k(ex, w, 2), 1.0);
}

TEST(EnsembleWeights, SerializationAndValidity) {
  const EnsembleWeights w{{0.25, 0.25, 0.05, 0.45}};
  EXPECT_TRUE(w.valid());
  EXPECT_EQ(deserialize_weights(serialize(w)), w);
  EXPECT_FALSE((EnsembleWeights{{-0.1, 0.6, 0.5, 0.0}}).valid());
  EXPECT_THROW(deserialize_weights(serialize(EnsembleWeights{{0.5, 0.0, 0.0, 0.0}})), FormatError);
}
