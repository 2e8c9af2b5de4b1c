#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fmm/priors.hpp"

using namespace fmm;

namespace {

PriorSpec reference_prior() {
  return PriorSpec{KPrior(GeometricK{0.5}), WeightsPrior(DirichletWeights{1.0, {}}),
                   ParamsPrior(IidParams{}), Family(NormalKnownVar{1.0, 0.0, 4.0})};
}

double min_pairwise(std::span<const double> v) {
  double best = INFINITY;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) best = std::min(best, std::abs(v[i] - v[j]));
  return best;
}

int fails(const ConditionReport& r) {
  return static_cast<int>(std::count_if(r.verdicts.begin(), r.verdicts.end(),
                                        [](const ConditionVerdict& v) { return v.verdict == Verdict::fail; }));
}

}  // namespace

TEST(KPrior, SpecExamples) {
  KPrior geo(GeometricK{0.5});
  EXPECT_NEAR(std::exp(geo.log_pmf(1)), 0.5, 1e-15);
  EXPECT_NEAR(std::exp(geo.log_pmf(2)), 0.25, 1e-15);
  EXPECT_NEAR(std::exp(KPrior(ShiftedPoissonK{1.0}).log_pmf(1)), std::exp(-1.0), 1e-15);
  EXPECT_THROW(geo.log_pmf(0), std::invalid_argument);
}

TEST(KPrior, TailSummation) {
  for (const auto& prior : {KPrior(GeometricK{0.5}), KPrior(GeometricK{0.1}), KPrior(ShiftedPoissonK{3.0})}) {
    double total = 0.0;
    for (std::size_t k = 1; k <= 1000; ++k) total += std::exp(prior.log_pmf(k));
    EXPECT_GT(total, 1 - 1e-9);
    EXPECT_LE(total, 1 + 1e-15);
    double head = 0.0;
    for (std::size_t k = 1; k <= 6; ++k) head += std::exp(prior.log_pmf(k));
    EXPECT_NEAR(prior.tail_mass(6), 1 - head, 1e-12);
    EXPECT_TRUE(prior.positive_on_all_k());
  }
}

TEST(KPrior, BoundedFixtureHasZeros) {
  KPrior b(BoundedUniformK{5});
  EXPECT_NEAR(std::exp(b.log_pmf(5)), 0.2, 1e-15);
  EXPECT_EQ(b.log_pmf(6), kNegInf);
  EXPECT_FALSE(b.positive_on_all_k());
  EXPECT_EQ(b.tail_mass(5), 0.0);
}

TEST(KPrior, SamplingMatchesPmf) {
  Rng rng(41);
  for (const auto& prior : {KPrior(GeometricK{0.4}), KPrior(ShiftedPoissonK{2.0})}) {
    const int n = 100000, bins = 8;  // last bin collects k >= bins
    std::vector<double> observed(bins, 0.0), expected(bins, 0.0);
    for (int i = 0; i < n; ++i) observed[std::min<std::size_t>(prior.sample(rng), bins) - 1] += 1;
    double below = 0;
    for (int k = 1; k < bins; ++k) below += expected[k - 1] = n * std::exp(prior.log_pmf(k));
    expected[bins - 1] = n - below;
    double stat = 0;
    for (int b = 0; b < bins; ++b) stat += std::pow(observed[b] - expected[b], 2) / expected[b];
    boost::math::chi_squared dist(bins - 1);
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, stat)), 1e-4);
  }
}

TEST(WeightsPrior, SingleComponentIsOne) {
  Rng rng(42);
  for (const auto& wp : {WeightsPrior(DirichletWeights{1.0, {}}), WeightsPrior(GeneralizedDirichletWeights{2, 3})}) {
    EXPECT_EQ(wp.sample(1, rng), std::vector<double>{1.0});
  }
}

TEST(WeightsPrior, SymmetricDirichletMomentsAndExchangeability) {
  Rng rng(43);
  WeightsPrior wp(DirichletWeights{1.0, {}});
  const std::size_t k = 4;
  const int n = 50000;
  std::vector<double> mean(k, 0.0), sq(k, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto w = wp.sample(k, rng);
    for (std::size_t j = 0; j < k; ++j) {
      mean[j] += w[j] / n;
      sq[j] += w[j] * w[j] / n;
    }
  }
  // Var(w_j) = (k - 1) / (k^2 (k + 1)) and E[w_j^2] = 2 / (k (k + 1)) for alpha = 1.
  const double sd = std::sqrt((k - 1.0) / (k * k * (k + 1.0)));
  for (std::size_t j = 0; j < k; ++j) {
    EXPECT_NEAR(mean[j], 1.0 / k, 4 * sd / std::sqrt(n));
    EXPECT_NEAR(sq[j], 2.0 / (k * (k + 1.0)), 0.003);
  }
}

TEST(WeightsPrior, AlphaByKOverridesSymmetric) {
  WeightsPrior wp(DirichletWeights{1.0, {{}, {2.0, 5.0}}});
  EXPECT_EQ(wp.alpha(2), (std::vector<double>{2.0, 5.0}));
  EXPECT_EQ(wp.alpha(3), (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(WeightsPrior, StickBreakingPositiveAndNormalized) {
  Rng rng(44);
  WeightsPrior wp(GeneralizedDirichletWeights{0.05, 0.05});
  for (int i = 0; i < 20000; ++i) {
    const auto w = wp.sample(2 + i % 5, rng);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    EXPECT_TRUE(std::all_of(w.begin(), w.end(), [](double x) { return x > 0.0 && x < 1.0; }));
  }
}

TEST(WeightsPrior, StickBreakingFirstWeightMean) {
  Rng rng(45);
  WeightsPrior wp(GeneralizedDirichletWeights{2.0, 3.0});
  const int n = 50000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += wp.sample(3, rng)[0];
  // W_1 = Z_1 ~ Beta(2, 3): mean 0.4, sd 0.2.
  EXPECT_NEAR(sum / n, 0.4, 4 * 0.2 / std::sqrt(n));
}

TEST(WeightsPrior, DensitiesIntegrateToOneOnSimplex) {
  using boost::math::quadrature::gauss_kronrod;
  for (const auto& wp : {WeightsPrior(DirichletWeights{1.0, {{}, {}, {1.5, 2.0, 3.0}}}),
                         WeightsPrior(GeneralizedDirichletWeights{2.0, 1.5})}) {
    const double total = gauss_kronrod<double, 31>::integrate(
        [&](double w1) {
          return gauss_kronrod<double, 31>::integrate(
              [&](double w2) {
                const std::vector<double> w{w1, w2, 1 - w1 - w2};
                return std::exp(wp.log_density(w));
              },
              0.0, 1.0 - w1, 10, 1e-12);
        },
        0.0, 1.0, 10, 1e-12);
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  EXPECT_NEAR(WeightsPrior(DirichletWeights{1.0, {}}).log_density(std::vector<double>{0.2, 0.3, 0.5}),
              std::log(2.0), 1e-12);
}

TEST(ParamsPrior, RepulsiveSpreadsComponents) {
  const Family f(NormalKnownVar{1.0, 0.0, 1.0});
  ParamsPrior iid(IidParams{}), rep(RepulsiveParams{1.0, RepulsionMode::min});
  Rng a(46), b(47);
  const int n = 20000;
  double iid_sum = 0, rep_sum = 0;
  std::vector<double> iid_vals, rep_vals;
  for (int i = 0; i < n; ++i) {
    iid_vals.push_back(min_pairwise(iid.sample(f, 3, a)));
    rep_vals.push_back(min_pairwise(rep.sample(f, 3, b)));
    iid_sum += iid_vals.back();
    rep_sum += rep_vals.back();
  }
  auto sd = [](const std::vector<double>& xs, double mean) {
    double s = 0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / (xs.size() - 1));
  };
  const double mi = iid_sum / n, mr = rep_sum / n;
  const double se = std::sqrt((std::pow(sd(iid_vals, mi), 2) + std::pow(sd(rep_vals, mr), 2)) / n);
  EXPECT_GT(mr - mi, 3 * se);
}

TEST(ParamsPrior, RepulsiveDensityIsRepulsionTimesBase) {
  const Family f(NormalKnownVar{1.0, 0.5, 2.0});
  for (auto mode : {RepulsionMode::min, RepulsionMode::product}) {
    RepulsiveParams rp{0.7, mode};
    ParamsPrior rep(rp), iid(IidParams{});
    const std::vector<double> v{-1.0, 0.3, 2.2};
    EXPECT_NEAR(rep.log_density(f, v, 3), std::log(repulsion_h(rp, v, 3, 1)) + iid.log_density(f, v, 3), 1e-12);
  }
  EXPECT_EQ(repulsion_rho(0.0, 1.0), 0.0);
  EXPECT_LT(repulsion_rho(1.0, 1.0), repulsion_rho(2.0, 1.0));
  EXPECT_LT(repulsion_rho(1e300, 1.0), 1.0 + 1e-15);
}

TEST(ParamsPrior, RepulsiveNormalizerConsistentAcrossBatches) {
  const Family f(NormalKnownVar{1.0, 0.0, 1.0});
  for (auto mode : {RepulsionMode::min, RepulsionMode::product}) {
    RepulsiveParams rp{0.5, mode};
    Rng a(48), b(49);
    const auto e1 = estimate_repulsive_normalizer(rp, f, 3, 50000, a);
    const auto e2 = estimate_repulsive_normalizer(rp, f, 3, 50000, b);
    EXPECT_GT(e1.mean, 0.0);
    EXPECT_LT(e1.mean, 1.0);
    EXPECT_LE(std::abs(e1.mean - e2.mean), 4 * std::hypot(e1.standard_error, e2.standard_error));
  }
}

TEST(ParamsPrior, RejectionDrawsMatchReweightedBaseDraws) {
  const Family f(NormalKnownVar{1.0, 0.0, 1.0});
  RepulsiveParams rp{1.0, RepulsionMode::min};
  ParamsPrior rep(rp), iid(IidParams{});
  Rng a(50), b(51);
  const int n = 40000;
  double weighted = 0, weight = 0, direct = 0;
  for (int i = 0; i < n; ++i) {
    const auto v = iid.sample(f, 2, a);
    const double h = repulsion_h(rp, v, 2, 1);
    weighted += h * std::abs(v[0] - v[1]);
    weight += h;
    const auto r = rep.sample(f, 2, b);
    direct += std::abs(r[0] - r[1]);
  }
  EXPECT_NEAR(direct / n, weighted / weight, 0.03);
}

TEST(ParamsPrior, RejectionCapThrows) {
  const Family f(NormalKnownVar{1.0, 0.0, 1.0});
  ParamsPrior rep(RepulsiveParams{1e13, RepulsionMode::min});
  Rng rng(52);
  EXPECT_THROW(rep.sample(f, 2, rng), std::runtime_error);
}

TEST(SampleThetaPrior, AllDrawsValidAndComponentCountFollowsPrior) {
  Rng rng(53);
  const auto prior = reference_prior();
  const int n = 50000, bins = 6;
  std::vector<double> observed(bins, 0.0), expected(bins, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto t = sample_theta_prior(prior, rng);
    ASSERT_TRUE(validate(t, prior.family).ok);
    observed[std::min<std::size_t>(t.k(), bins) - 1] += 1;
  }
  double below = 0;
  for (int k = 1; k < bins; ++k) below += expected[k - 1] = n * std::exp(prior.k_prior.log_pmf(k));
  expected[bins - 1] = n - below;
  double stat = 0;
  for (int b = 0; b < bins; ++b) stat += std::pow(observed[b] - expected[b], 2) / expected[b];
  boost::math::chi_squared dist(bins - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, stat)), 1e-4);
}

TEST(SampleThetaPrior, NoDuplicateRowsUnderContinuousBase) {
  Rng rng(54);
  const auto prior = reference_prior();
  std::size_t multi = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const auto t = sample_theta_prior(prior, rng);
    if (t.k() > 1) ++multi;
    ASSERT_TRUE(has_distinct_rows(t)) << "draw " << i;
  }
  EXPECT_GT(multi, 400000u);
}

TEST(LogPartitionPrior, SpecExamples) {
  WeightsPrior wp(DirichletWeights{1.0, {}});
  const std::vector<std::size_t> same{0, 0};
  EXPECT_NEAR(log_partition_prior(same, 2, wp), std::log(1.0 / 3.0), 1e-14);
  WeightsPrior asym(DirichletWeights{1.0, {{}, {}, {0.5, 2.0, 1.5}}});
  for (std::size_t j = 0; j < 3; ++j) {
    const std::vector<std::size_t> z{j};
    EXPECT_NEAR(log_partition_prior(z, 3, asym), std::log(asym.alpha(3)[j] / 4.0), 1e-14);
  }
  const std::vector<std::size_t> z{0, 1, 1, 2};
  const std::vector<std::size_t> relabeled{2, 0, 0, 1};
  EXPECT_EQ(log_partition_prior(z, 3, wp), log_partition_prior(relabeled, 3, wp));
  EXPECT_THROW(log_partition_prior(z, 3, WeightsPrior(GeneralizedDirichletWeights{1, 1})), std::invalid_argument);
}

TEST(LogPartitionPrior, NormalizesOverAllAssignments) {
  for (const auto& wp : {WeightsPrior(DirichletWeights{1.0, {}}), WeightsPrior(DirichletWeights{0.3, {}}),
                         WeightsPrior(DirichletWeights{1.0, {{}, {0.4, 2.5}, {3.0, 0.2, 1.1}}})}) {
    for (std::size_t k = 1; k <= 3; ++k) {
      for (std::size_t n = 1; n <= 6; ++n) {
        std::vector<std::size_t> z(n, 0);
        std::vector<double> logs;
        while (true) {
          logs.push_back(log_partition_prior(z, k, wp));
          std::size_t i = n;
          while (i > 0 && ++z[i - 1] == k) z[--i] = 0;
          if (i == 0) break;
        }
        EXPECT_NEAR(log_sum_exp(logs), 0.0, 1e-10) << "k=" << k << " n=" << n;
      }
    }
  }
}

TEST(CheckConditions, ReferencePassesEverything) {
  const auto report = check_conditions(reference_prior(), ConditionBudget{}, 7);
  ASSERT_EQ(report.verdicts.size(), 6u);
  EXPECT_TRUE(report.all_pass());
  for (const char* id : {"1(1)", "1(2)", "2(1)", "2(2)", "2(3)", "2(4)"}) {
    EXPECT_EQ(report.at(id).verdict, Verdict::pass) << id << ": " << report.at(id).detail;
  }
}

TEST(CheckConditions, BoundedKFailsOnlyPositivity) {
  auto prior = reference_prior();
  prior.k_prior = KPrior(BoundedUniformK{5});
  const auto report = check_conditions(prior, ConditionBudget{}, 7);
  EXPECT_EQ(report.at("2(1)").verdict, Verdict::fail);
  EXPECT_EQ(fails(report), 1);
}

TEST(CheckConditions, AtomBaseFailsOnlyDistinctness) {
  auto prior = reference_prior();
  prior.params_prior = ParamsPrior(AtomParams{{0.0}, 0.5});
  const auto report = check_conditions(prior, ConditionBudget{}, 7);
  EXPECT_EQ(report.at("2(4)").verdict, Verdict::fail);
  EXPECT_EQ(fails(report), 1);
}

TEST(CheckConditions, OtherBuiltInPriorsPass) {
  for (const auto& prior :
       {PriorSpec{KPrior(ShiftedPoissonK{1.0}), WeightsPrior(GeneralizedDirichletWeights{1.5, 2.0}),
                  ParamsPrior(RepulsiveParams{0.1, RepulsionMode::product}), Family(PoissonGamma{2.0, 0.5})},
        PriorSpec{KPrior(GeometricK{0.3}), WeightsPrior(DirichletWeights{0.5, {}}), ParamsPrior(IidParams{}),
                  Family(NormalMeanVar{0.0, 1.0, 2.0, 2.0})}}) {
    const auto report = check_conditions(prior, ConditionBudget{}, 8);
    for (const auto& v : report.verdicts) EXPECT_EQ(v.verdict, Verdict::pass) << v.id << ": " << v.detail;
  }
}

TEST(CheckConditions, DeterministicGivenSeed) {
  const auto a = check_conditions(reference_prior(), ConditionBudget{}, 9);
  const auto b = check_conditions(reference_prior(), ConditionBudget{}, 9);
  ASSERT_EQ(a.verdicts.size(), b.verdicts.size());
  for (std::size_t i = 0; i < a.verdicts.size(); ++i) {
    EXPECT_EQ(a.verdicts[i].id, b.verdicts[i].id);
    EXPECT_EQ(a.verdicts[i].detail, b.verdicts[i].detail);
  }
}
