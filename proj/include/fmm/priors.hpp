#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fmm/families.hpp"
#include "fmm/numeric.hpp"
#include "fmm/param_space.hpp"

namespace fmm {

// ---------------------------------------------------------------------------
// Prior on the number of components.

struct GeometricK {
  double p = 0.5;  // pi(k) = p (1 - p)^(k - 1)
};
struct ShiftedPoissonK {
  double mu = 1.0;  // k - 1 ~ Poisson(mu)
};
/// Uniform on {1..max}. Violates positivity on all k; exists as a negative fixture.
struct BoundedUniformK {
  std::size_t max = 5;
};

class KPrior {
 public:
  using Kind = std::variant<GeometricK, ShiftedPoissonK, BoundedUniformK>;
  explicit KPrior(Kind kind);

  const Kind& kind() const { return kind_; }
  /// Throws std::invalid_argument for k < 1; -inf outside the support.
  double log_pmf(std::size_t k) const;
  std::size_t sample(Rng& rng) const;
  /// pi({k > k_max}).
  double tail_mass(std::size_t k_max) const;
  /// Analytic answer to "pi(k) > 0 for every k >= 1".
  bool positive_on_all_k() const;

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Prior on the weights given k.

/// Dirichlet(alpha_1..alpha_k). `alpha_by_k[k-1]`, when present, overrides the
/// symmetric `alpha` for that k.
struct DirichletWeights {
  double alpha = 1.0;
  std::vector<std::vector<double>> alpha_by_k;
};
/// Stick-breaking with Z_i ~ Beta(a, b), W_i = Z_i prod_{j<i} (1 - Z_j).
struct GeneralizedDirichletWeights {
  double a = 1.0;
  double b = 1.0;
};

class WeightsPrior {
 public:
  using Kind = std::variant<DirichletWeights, GeneralizedDirichletWeights>;
  explicit WeightsPrior(Kind kind);

  const Kind& kind() const { return kind_; }
  bool is_dirichlet() const { return std::holds_alternative<DirichletWeights>(kind_); }
  /// Dirichlet concentration vector for this k; throws for non-Dirichlet kinds.
  std::vector<double> alpha(std::size_t k) const;
  /// log density with respect to Lebesgue measure on (w_1..w_{k-1}); 0 for k = 1.
  double log_density(std::span<const double> w) const;
  std::vector<double> sample(std::size_t k, Rng& rng) const;

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Prior on the component parameters given k.

struct IidParams {};

enum class RepulsionMode { product, min };

/// Density proportional to h(v) prod g0(v_i) with rho(s) = s / (s + tau).
struct RepulsiveParams {
  double tau = 1.0;
  RepulsionMode mode = RepulsionMode::min;
};

/// G0 contaminated with an atom: (1 - weight) G0 + weight * delta_location.
/// Negative fixture for the distinctness condition.
struct AtomParams {
  std::vector<double> location;
  double weight = 0.5;
};

inline constexpr std::size_t kRejectionAttemptCap = 1'000'000;

class ParamsPrior {
 public:
  using Kind = std::variant<IidParams, RepulsiveParams, AtomParams>;
  explicit ParamsPrior(Kind kind);

  const Kind& kind() const { return kind_; }
  bool is_iid() const { return std::holds_alternative<IidParams>(kind_); }

  /// k x D row-major. Repulsive draws use rejection against h <= 1 and throw
  /// std::runtime_error after kRejectionAttemptCap attempts.
  std::vector<double> sample(const Family& family, std::size_t k, Rng& rng) const;
  /// log of the (unnormalized, for repulsive) density of the absolutely
  /// continuous part with respect to Lebesgue measure on V^k.
  double log_density(const Family& family, std::span<const double> v, std::size_t k) const;

 private:
  Kind kind_;
};

double repulsion_rho(double s, double tau);
/// h(v) for k rows of dimension dim; 1 when k < 2.
double repulsion_h(const RepulsiveParams& rep, std::span<const double> v, std::size_t k,
                   std::size_t dim);

struct NormalizerEstimate {
  double mean;
  double standard_error;
};
/// Monte Carlo estimate of E_{g0^k}[h(V)], the repulsive normalizing constant
/// (equivalently the rejection sampler's acceptance rate).
NormalizerEstimate estimate_repulsive_normalizer(const RepulsiveParams& rep, const Family& family,
                                                 std::size_t k, std::size_t draws, Rng& rng);

// ---------------------------------------------------------------------------

struct PriorSpec {
  KPrior k_prior;
  WeightsPrior weights_prior;
  ParamsPrior params_prior;
  Family family;

  /// Dirichlet weights with iid conjugate G0: the only path inference supports.
  bool supports_inference() const {
    return weights_prior.is_dirichlet() && params_prior.is_iid();
  }
};

MixtureParams sample_theta_prior(const PriorSpec& prior, Rng& rng);

/// log p(z | k) with the weights integrated out (Dirichlet-multinomial).
/// Labels are 0-based. Throws for non-Dirichlet weight priors.
double log_partition_prior(std::span<const std::size_t> z, std::size_t k,
                           const WeightsPrior& weights_prior);
/// Same quantity from cluster occupancy counts (size k).
double log_partition_prior_counts(std::span<const std::size_t> counts,
                                  const WeightsPrior& weights_prior);

// ---------------------------------------------------------------------------
// Condition checks.

enum class Verdict { pass, fail, inconclusive };

struct ConditionVerdict {
  std::string id;      // "1(1)", "1(2)", "2(1)".."2(4)"
  std::string name;
  Verdict verdict;
  std::string method;  // analytic, numeric probe, Monte Carlo, by construction
  std::string detail;
};

struct ConditionReport {
  std::vector<ConditionVerdict> verdicts;

  bool all_pass() const;
  bool any_fail() const;
  const ConditionVerdict& at(std::string_view id) const;
};

struct ConditionBudget {
  std::size_t k_probe_max = 4;
  std::size_t density_probes = 200;
  std::size_t distinct_draws = 10'000;
  std::size_t identifiability_pairs = 200;
  std::size_t probe_points = 20;
  double box_halfwidth = 10.0;
};

/// Sub-checks run on separate seed streams derived from `seed`, so the report
/// is deterministic and independent of evaluation order.
ConditionReport check_conditions(const PriorSpec& prior, const ConditionBudget& budget,
                                 std::uint64_t seed);

std::string_view to_string(Verdict v);

}  // namespace fmm
