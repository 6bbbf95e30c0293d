#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "triage/errors.hpp"
#include "triage/similar_scorer.hpp"

using namespace triage;

namespace {

double score_of(const std::vector<ResolverScore>& s, const std::string& r) {
  for (const auto& x : s) if (x.resolver == r) return x.score;
  return std::numeric_limits<double>::quiet_NaN();
}

// Neighbour lists where the true resolver tends to sit closer.
std::vector<ScorerExample> synthetic_examples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScorerExample> out;
  for (std::size_t e = 0; e < n; ++e) {
    ScorerExample ex;
    ex.true_resolver = "R" + std::to_string(e % 5);
    for (int i = 0; i < 20; ++i) {
      const bool truth = u(rng) < 0.35;
      const std::string r = truth ? ex.true_resolver : "R" + std::to_string(static_cast<int>(u(rng) * 5));
      const double d = truth ? 0.3 + 0.6 * u(rng) : 0.6 + 0.7 * u(rng);
      ex.neighbors.push_back({"t" + std::to_string(e) + "-" + std::to_string(i), r, d});
    }
    out.push_back(ex);
  }
  return out;
}

}  // namespace

TEST(ScaleDistance, HandValuesAndFloor) {
  const ScorerParams p{0.2, 1.0, 0.5};
  EXPECT_DOUBLE_EQ(scale_distance(0.6, p), 0.5);
  EXPECT_DOUBLE_EQ(scale_distance(1.8, p), 2.0);  // unbounded above
  EXPECT_DOUBLE_EQ(scale_distance(0.1, p), kScaledDistanceFloor);
  EXPECT_DOUBLE_EQ(scale_distance(0.2, p), kScaledDistanceFloor);
}

TEST(ResolverScores, RankDiscountHandExample) {
  // A's tickets at scaled 0.5 and 1.0 (ranks 0, 1): 1/0.5 + 0.5/1 = 2.5.
  const ScorerParams p{0.0, 1.0, 0.5};
  const std::vector<Neighbor> n{{"x1", "A", 0.5}, {"x2", "B", 0.8}, {"x3", "A", 1.0}};
  const auto s = resolver_scores(n, p);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].resolver, "A");
  EXPECT_DOUBLE_EQ(s[0].score, 2.5);
  EXPECT_DOUBLE_EQ(s[1].score, 1.25);

  const std::vector<Neighbor> single{{"x1", "A", 0.5}};
  EXPECT_DOUBLE_EQ(resolver_scores(single, p)[0].score, 2.0);
  EXPECT_TRUE(resolver_scores({}, p).empty());
}

TEST(ScoreNeighbors, SortsAndRanksPerResolver) {
  const ScorerParams p{0.0, 1.0, 0.7};
  const std::vector<Neighbor> n{{"c", "A", 0.9}, {"b", "B", 0.4}, {"a", "A", 0.4}, {"d", "A", 0.2}};
  const auto s = score_neighbors(n, p);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].neighbor.ticket_id, "d");
  EXPECT_EQ(s[1].neighbor.ticket_id, "a");  // distance tie, id order
  EXPECT_EQ(s[2].neighbor.ticket_id, "b");
  EXPECT_EQ(s[0].rank, 0u);
  EXPECT_EQ(s[1].rank, 1u);
  EXPECT_EQ(s[2].rank, 0u);
  EXPECT_EQ(s[3].rank, 2u);
  EXPECT_DOUBLE_EQ(s[3].weight, 0.7 * 0.7);
}

TEST(ScoresToProbs, SoftmaxHandExample) {
  const std::vector<ResolverScore> s{{"A", std::log(2.0)}, {"B", 0.0}};
  const auto p = scores_to_probs(s);
  EXPECT_NEAR(p[0].probability, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p[1].probability, 1.0 / 3.0, 1e-12);
  const std::vector<ResolverScore> big{{"A", 1e6}, {"B", 1e6 - 1}};
  const auto q = scores_to_probs(big);
  EXPECT_TRUE(std::isfinite(q[0].probability));
  EXPECT_NEAR(q[0].probability + q[1].probability, 1.0, 1e-12);
}

TEST(ResolverScores, RankWeightsStayUnderBound) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double beta : {0.1, 0.5, 0.9, 0.99}) {
    std::vector<Neighbor> n;
    for (int i = 0; i < 500; ++i) n.push_back({"t" + std::to_string(i), "R" + std::to_string(i % 3), u(rng) * 2});
    double by_resolver[3] = {0, 0, 0};
    for (const auto& s : score_neighbors(n, {0.0, 1.0, beta})) by_resolver[s.neighbor.resolver.back() - '0'] += s.weight;
    for (double w : by_resolver) EXPECT_LE(w, rank_weight_bound(beta));  // equal only by rounding
  }
}

TEST(ResolverScores, AddingAWorseTicketNeverLowersScore) {
  const ScorerParams p{0.1, 1.2, 0.6};
  std::vector<Neighbor> n{{"a", "A", 0.3}, {"b", "A", 0.5}, {"c", "B", 0.4}};
  const double before = score_of(resolver_scores(n, p), "A");
  n.push_back({"z", "A", 1.1});  // farther than every A ticket
  const auto after = resolver_scores(n, p);
  EXPECT_GT(score_of(after, "A"), before);
  EXPECT_DOUBLE_EQ(score_of(after, "B"), score_of(resolver_scores(std::vector<Neighbor>{n[2]}, p), "B"));
}

TEST(ResolverScores, IndependentOfInputOrder) {
  const auto ex = synthetic_examples(1, 2)[0];
  auto shuffled = ex.neighbors;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(3));
  const ScorerParams p{0.2, 1.5, 0.7};
  EXPECT_EQ(resolver_scores(ex.neighbors, p), resolver_scores(shuffled, p));
}

TEST(ScorerLogLoss, AbsentResolverChargedAtFloor) {
  const std::vector<ScorerExample> ex{{{{"a", "A", 0.5}}, "Z"}};
  EXPECT_NEAR(scorer_log_loss(ex, {}), -std::log(kAbsentResolverFloor), 1e-9);
  const std::vector<ScorerExample> only{{{{"a", "A", 0.5}}, "A"}};
  EXPECT_NEAR(scorer_log_loss(only, {}), 0.0, 1e-12);
}

TEST(FitParams, GridOptimumMatchesBruteForce) {
  const auto ex = synthetic_examples(80, 4);
  ScorerSearch s;
  s.refine = false;
  ScorerFitReport rep;
  const auto best = fit_params(ex, s, &rep);
  EXPECT_EQ(rep.grid_points, 4u * 5u * 4u);
  EXPECT_FALSE(rep.refinement_used);
  double brute = std::numeric_limits<double>::infinity();
  for (double a : s.theta_min_grid)
    for (double b : s.theta_max_grid)
      for (double c : s.beta_grid) brute = std::min(brute, scorer_log_loss(ex, {a, b, c}));
  EXPECT_NEAR(rep.grid_loss, brute, 1e-12);
  EXPECT_NEAR(scorer_log_loss(ex, best), brute, 1e-12);
}

TEST(FitParams, RefinementNeverLosesAndStaysFeasible) {
  const auto ex = synthetic_examples(120, 5);
  ScorerFitReport rep;
  const auto p = fit_params(ex, {}, &rep);
  EXPECT_TRUE(p.valid());
  EXPECT_LE(rep.final_loss, rep.grid_loss + 1e-15);
  EXPECT_NEAR(rep.final_loss, scorer_log_loss(ex, p), 1e-12);
  EXPECT_LE(rep.final_loss, scorer_log_loss(ex, ScorerParams{}));
}

TEST(FitParams, Preconditions) {
  EXPECT_THROW(fit_params({}), InvalidArgument);
  ScorerSearch infeasible;
  infeasible.theta_min_grid = {2.0};
  infeasible.theta_max_grid = {1.0};
  EXPECT_THROW(fit_params(synthetic_examples(3, 6), infeasible), InvalidArgument);
}

TEST(ScorerParams, SerializationRoundTripAndValidation) {
  const ScorerParams p{0.13, 1.37, 0.61};
  EXPECT_EQ(deserialize_scorer(serialize(p)), p);
  EXPECT_THROW(deserialize_scorer(serialize(ScorerParams{1.0, 0.5, 0.5})), FormatError);
  EXPECT_THROW(deserialize_scorer("junk"), FormatError);
  EXPECT_FALSE((ScorerParams{0.0, 1.0, 1.0}).valid());
}
