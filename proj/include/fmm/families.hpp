#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "fmm/numeric.hpp"
#include "fmm/param_space.hpp"

namespace fmm {

/// Observations as fixed-dimension real vectors stored contiguously.
struct Dataset {
  std::size_t dim = 1;
  std::vector<double> values;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim, dim);
  }
  /// First n points, sharing no storage with *this.
  Dataset prefix(std::size_t n) const;
};

/// Count plus two family-specific sufficient statistics:
///   normal families: (sum x, sum x^2); Poisson: (sum x, sum log x!).
struct ClusterStats {
  std::size_t count = 0;
  std::array<double, 2> s{0.0, 0.0};

  ClusterStats& operator+=(const ClusterStats& other);
};

/// Normal with fixed variance sigma^2; V = R; G0 = Normal(mu0, tau0^2).
struct NormalKnownVar {
  double sigma = 1.0;
  double mu0 = 0.0;
  double tau0 = 1.0;
};

/// Normal with unknown (mean, variance); V = R x (0, inf);
/// G0 = Normal-Inverse-Gamma: var ~ IG(a0, b0), mean | var ~ N(mu0, var / kappa0).
struct NormalMeanVar {
  double mu0 = 0.0;
  double kappa0 = 1.0;
  double a0 = 1.0;
  double b0 = 1.0;
};

/// Poisson rate; V = (0, inf); G0 = Gamma(shape a0, rate b0).
struct PoissonGamma {
  double a0 = 1.0;
  double b0 = 1.0;
};

class Family {
 public:
  using Model = std::variant<NormalKnownVar, NormalMeanVar, PoissonGamma>;

  explicit Family(Model model);

  std::string_view name() const;
  std::size_t param_dim() const;
  std::size_t data_dim() const { return 1; }
  const ParamDomain& domain() const { return domain_; }
  const Model& model() const { return model_; }
  std::vector<double> base_hyperparams() const;

  /// Whether x lies in the support of the data space (integrality for Poisson).
  bool data_in_support(std::span<const double> x) const;
  /// Throws std::invalid_argument naming the first offending point.
  void check_dataset(const Dataset& data) const;

  /// Throws std::domain_error when v is outside V.
  double component_log_density(std::span<const double> v, std::span<const double> x) const;
  void sample_component(std::span<const double> v, Rng& rng, std::span<double> out) const;

  /// log density of G0 with respect to Lebesgue measure on V.
  double base_log_density(std::span<const double> v) const;
  void sample_base(Rng& rng, std::span<double> out) const;

  ClusterStats stats_of(std::span<const double> x) const;
  void add_point(ClusterStats& stats, std::span<const double> x) const;
  void remove_point(ClusterStats& stats, std::span<const double> x) const;
  ClusterStats stats_of(const Dataset& data, std::span<const std::size_t> indices) const;

  /// log of the integral of prod_i f_v(x_i) dG0(v); 0 for an empty cluster.
  double cluster_log_marginal(const ClusterStats& stats) const;
  /// Exact draw from the conjugate posterior of v given the cluster's data.
  void sample_param_posterior(const ClusterStats& stats, Rng& rng, std::span<double> out) const;
  std::vector<double> sample_param_posterior(const ClusterStats& stats, Rng& rng) const;

 private:
  Model model_;
  ParamDomain domain_;
};

ValidationReport validate(const MixtureParams& theta, const Family& family);

double mixture_log_density(const Family& family, const MixtureParams& theta,
                           std::span<const double> x);

struct SimulatedData {
  Dataset data;
  std::vector<std::size_t> labels;
};

/// n i.i.d. draws; draw i consumes the RNG for its label then its value, so
/// the output for n is a prefix of the output for any larger n.
SimulatedData sample_mixture(const Family& family, const MixtureParams& theta, std::size_t n,
                             Rng& rng);

double sample_gamma(double shape, double rate, Rng& rng);
/// Dirichlet draw kept strictly inside the open simplex.
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng);

}  // namespace fmm
