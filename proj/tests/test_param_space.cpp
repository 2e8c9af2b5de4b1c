#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fmm/param_space.hpp"
#include "fmm/numeric.hpp"

using namespace fmm;

namespace {

const ParamDomain kReal{{{-INFINITY, INFINITY}}};
const ParamDomain kPositive{{{0.0, INFINITY}}};

MixtureParams random_theta(std::size_t k, std::size_t dim, Rng& rng, double spread = 1.0) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::normal_distribution<double> nd(0.0, spread);
  std::vector<double> w(k), v(k * dim);
  for (auto& x : w) x = g(rng) + 1e-3;
  for (auto& x : v) x = nd(rng);
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= s;
  return MixtureParams::normalized(w, v, dim);
}

// Weights are multiples of 1/1024 and rows multiples of 1/256, so every
// difference and square is exact and only the final square root rounds.
MixtureParams grid_theta(std::size_t k, Rng& rng) {
  std::vector<double> w(k, 1.0);
  for (int unit = 0; unit < 1024 - static_cast<int>(k); ++unit) w[rng() % k] += 1.0;
  for (auto& x : w) x /= 1024.0;
  std::vector<double> v(k);
  for (auto& x : v) x = static_cast<double>(static_cast<int>(rng() % 257) - 128) / 256.0;
  return MixtureParams(w, v, 1);
}

Permutation random_perm(std::size_t k, Rng& rng) {
  std::vector<std::size_t> s(k);
  std::iota(s.begin(), s.end(), 0);
  std::shuffle(s.begin(), s.end(), rng);
  return Permutation(s);
}

}  // namespace

TEST(Validate, SpecExamples) {
  EXPECT_TRUE(validate(MixtureParams({0.5, 0.5}, {{0.0}, {1.0}}), kReal).ok);

  auto bad = validate(MixtureParams({0.5, 0.6}, {{0.0}, {1.0}}), kReal);
  EXPECT_FALSE(bad.ok);
  EXPECT_NE(bad.violation.find("weights sum 1.1"), std::string::npos) << bad.violation;

  auto outside = validate(MixtureParams({1.0}, {{-3.0}}), kPositive);
  EXPECT_FALSE(outside.ok);
  EXPECT_NE(outside.violation.find("outside V"), std::string::npos) << outside.violation;
}

TEST(Validate, RejectsZeroWeightAndAcceptsSingleComponent) {
  EXPECT_FALSE(validate(MixtureParams({0.0, 1.0}, {{0.0}, {1.0}}), kReal).ok);
  EXPECT_TRUE(validate(MixtureParams({1.0}, {{0.0}}), kReal).ok);
  EXPECT_FALSE(validate(MixtureParams({0.5, 0.5 + 1e-11}, {{0.0}, {1.0}}), kReal).ok);
}

TEST(MixtureParams, ShapeChecks) {
  EXPECT_THROW(MixtureParams({0.5, 0.5}, {1.0, 2.0, 3.0}, 1), std::invalid_argument);
  EXPECT_THROW(MixtureParams::normalized({0.5, 0.6}, {1.0, 2.0}, 1), std::invalid_argument);
  auto m = MixtureParams::normalized({0.5, 0.5 + 1e-10}, {1.0, 2.0}, 1);
  EXPECT_TRUE(validate(m, kReal).ok);
}

TEST(Permute, SpecExamples) {
  MixtureParams t({0.3, 0.7}, {{0.0}, {2.0}});
  EXPECT_EQ(permute(t, Permutation({1, 0})), MixtureParams({0.7, 0.3}, {{2.0}, {0.0}}));
  EXPECT_EQ(permute(t, Permutation::identity(2)), t);

  MixtureParams u({0.2, 0.3, 0.5}, {{1.0}, {2.0}, {3.0}});
  EXPECT_EQ(permute(u, Permutation({2, 0, 1})), MixtureParams({0.5, 0.2, 0.3}, {{3.0}, {1.0}, {2.0}}));
  EXPECT_THROW(permute(u, Permutation({1, 0})), std::invalid_argument);
  EXPECT_THROW(Permutation({0, 0, 1}), std::invalid_argument);
}

TEST(Permute, InverseRoundTrip) {
  Rng rng(11);
  for (int rep = 0; rep < 500; ++rep) {
    auto t = random_theta(1 + rep % 6, 1 + rep % 2, rng);
    auto s = random_perm(t.k(), rng);
    EXPECT_EQ(permute(permute(t, s), s.inverse()), t);
  }
}

TEST(DTheta, SpecExamples) {
  MixtureParams one({1.0}, {{0.0}});
  MixtureParams two({0.5, 0.5}, {{0.0}, {1.0}});
  EXPECT_EQ(d_theta(one, two), 1.0);
  EXPECT_EQ(d_theta(two, two), 0.0);
  MixtureParams a({0.5, 0.5}, {{0.0}, {3.0}});
  MixtureParams b({0.5, 0.5}, {{3.0}, {0.0}});
  EXPECT_EQ(d_theta(a, b), 1.0);
  MixtureParams c({0.5, 0.5}, {{0.0}, {3.3}});
  EXPECT_NEAR(d_theta(a, c), 0.3, 1e-15);
}

TEST(DTheta, MetricAxiomsOverMixedK) {
  Rng rng(12);
  for (int rep = 0; rep < 20000; ++rep) {
    auto x = grid_theta(1 + rng() % 4, rng);
    auto y = grid_theta(1 + rng() % 4, rng);
    auto z = grid_theta(1 + rng() % 4, rng);
    const double dxy = d_theta(x, y), dyx = d_theta(y, x);
    EXPECT_EQ(dxy, dyx);
    EXPECT_GE(dxy, 0.0);
    EXPECT_LE(dxy, 1.0);
    EXPECT_EQ(d_theta(x, x), 0.0);
    EXPECT_LE(d_theta(x, z), dxy + d_theta(y, z));
    if (x.k() != y.k()) EXPECT_EQ(dxy, 1.0);
  }
}

TEST(MinPermDistance, SpecExamples) {
  MixtureParams t0({0.3, 0.7}, {{0.0}, {2.0}});
  MixtureParams t({0.7, 0.3}, {{2.1}, {-0.1}});
  EXPECT_NEAR(min_perm_distance(t, t0), std::sqrt(0.02), 1e-12);
  EXPECT_EQ(min_perm_distance(permute(t0, Permutation({1, 0})), t0), 0.0);
  MixtureParams three({0.2, 0.3, 0.5}, {{1.0}, {2.0}, {3.0}});
  EXPECT_EQ(min_perm_distance(t, three), 1.0);
}

TEST(MinPermDistance, InvariantUnderRelabelingEitherArgument) {
  Rng rng(13);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t k = 1 + rep % 5;
    auto a = random_theta(k, 2, rng, 0.3);
    auto b = random_theta(k, 2, rng, 0.3);
    const double d = min_perm_distance(a, b);
    EXPECT_EQ(min_perm_distance(permute(a, random_perm(k, rng)), b), d);
    EXPECT_EQ(min_perm_distance(a, permute(b, random_perm(k, rng))), d);
    EXPECT_LE(d, d_theta(a, b));
  }
}

TEST(MinPermDistance, HungarianMatchesExhaustive) {
  Rng rng(14);
  for (int rep = 0; rep < 3000; ++rep) {
    const std::size_t k = 1 + rep % 6;
    auto a = random_theta(k, 1 + rep % 3, rng, 0.2);
    auto b = random_theta(k, a.param_dim(), rng, 0.2);
    EXPECT_EQ(min_perm_distance_hungarian(a, b), min_perm_distance_exhaustive(a, b)) << "k=" << k;
  }
}

TEST(SolveAssignment, KnownOptimum) {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  auto s = solve_assignment(cost, 3);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) total += cost[i * 3 + s[i]];
  EXPECT_EQ(total, 5.0);
}

TEST(SolveAssignment, LargeKAgreesWithCostOfAlignment) {
  Rng rng(15);
  auto a = random_theta(9, 1, rng, 0.05);
  auto sigma = random_perm(9, rng);
  auto b = permute(a, sigma);
  EXPECT_EQ(min_perm_distance(b, a), 0.0);
  EXPECT_EQ(permute(a, optimal_alignment(b, a)), b);
}

TEST(InNeighborhood, SpecExamples) {
  MixtureParams t0({0.3, 0.7}, {{0.0}, {2.0}});
  MixtureParams t({0.7, 0.3}, {{2.1}, {-0.1}});
  EXPECT_TRUE(in_neighborhood(permute(t0, Permutation({1, 0})), NeighborhoodSpec(t0, 1e-9)));
  EXPECT_FALSE(in_neighborhood(MixtureParams({1.0}, {{0.0}}), NeighborhoodSpec(t0, 0.5)));
  EXPECT_TRUE(in_neighborhood(t, NeighborhoodSpec(t0, 0.2)));
  EXPECT_FALSE(in_neighborhood(t, NeighborhoodSpec(t0, 0.1)));
  EXPECT_THROW(NeighborhoodSpec(t0, 0.0), std::invalid_argument);
}

TEST(InNeighborhood, RadiusOneCoversStratum) {
  MixtureParams t0({0.5, 0.5}, {{-2.0}, {2.0}});
  MixtureParams far({0.5, 0.5}, {{40.0}, {90.0}});
  EXPECT_TRUE(in_neighborhood(far, NeighborhoodSpec(t0, 1.0)));
  EXPECT_FALSE(in_neighborhood(far, NeighborhoodSpec(t0, 0.999)));
  EXPECT_FALSE(in_neighborhood(MixtureParams({1.0}, {{0.0}}), NeighborhoodSpec(t0, 1.0)));
}

TEST(LexCompare, SpecExamples) {
  const std::vector<double> a{1, 5}, b{2, 0}, c{1, 4};
  EXPECT_EQ(lex_compare(a, b), LexOrder::less);
  EXPECT_EQ(lex_compare(a, a), LexOrder::equal);
  EXPECT_EQ(lex_compare(a, c), LexOrder::greater);
  const std::vector<double> d{1};
  EXPECT_THROW(lex_compare(a, d), std::invalid_argument);
}

TEST(Collapse, SpecExamples) {
  EXPECT_EQ(collapse(MixtureParams({0.2, 0.8}, {{5.0}, {1.0}})), MixtureParams({0.8, 0.2}, {{1.0}, {5.0}}));
  MixtureParams canon({0.8, 0.2}, {{1.0}, {5.0}});
  EXPECT_EQ(collapse(canon), canon);
  MixtureParams tied({0.4, 0.6}, {{1.0}, {1.0}});
  EXPECT_EQ(collapse(tied), tied);
}

TEST(Collapse, IdempotentCanonicalAndPermutationEquivalent) {
  Rng rng(16);
  for (int rep = 0; rep < 5000; ++rep) {
    auto t = random_theta(1 + rep % 5, 1 + rep % 2, rng);
    auto c = collapse(t);
    EXPECT_EQ(collapse(c), c);
    EXPECT_TRUE(is_canonical(c));
    EXPECT_EQ(min_perm_distance(c, t), 0.0);
    EXPECT_EQ(collapse(permute(t, random_perm(t.k(), rng))), c);
  }
}

TEST(IsCanonical, SpecExamples) {
  EXPECT_TRUE(is_canonical(MixtureParams({0.5, 0.5}, {{1.0}, {5.0}})));
  EXPECT_FALSE(is_canonical(MixtureParams({0.5, 0.5}, {{5.0}, {1.0}})));
  EXPECT_FALSE(is_canonical(MixtureParams({0.5, 0.5}, {{1.0}, {1.0}})));
  EXPECT_TRUE(is_canonical(MixtureParams({1.0}, {{7.0}})));
}
