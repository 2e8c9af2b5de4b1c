#include "fmm/families.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fmm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kInf = std::numeric_limits<double>::infinity();

ParamDomain domain_for(const Family::Model& model) {
  return std::visit(
      overloaded{
          [](const NormalKnownVar&) { return ParamDomain{{{-kInf, kInf}}}; },
          [](const NormalMeanVar&) { return ParamDomain{{{-kInf, kInf}, {0.0, kInf}}}; },
          [](const PoissonGamma&) { return ParamDomain{{{0.0, kInf}}}; },
      },
      model);
}

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::invalid_argument(std::string(what) + " must be finite and > 0");
  }
}

double normal_log_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var)) - 0.5 * d * d / var;
}

}  // namespace

Dataset Dataset::prefix(std::size_t n) const {
  if (n > size()) throw std::out_of_range("Dataset::prefix: n exceeds dataset size");
  Dataset out;
  out.dim = dim;
  out.values.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n * dim));
  return out;
}

ClusterStats& ClusterStats::operator+=(const ClusterStats& other) {
  count += other.count;
  s[0] += other.s[0];
  s[1] += other.s[1];
  return *this;
}

Family::Family(Model model) : model_(std::move(model)), domain_(domain_for(model_)) {
  std::visit(overloaded{
                 [](const NormalKnownVar& m) {
                   require_positive(m.sigma, "sigma");
                   require_positive(m.tau0, "tau0");
                   if (!std::isfinite(m.mu0)) throw std::invalid_argument("mu0 must be finite");
                 },
                 [](const NormalMeanVar& m) {
                   require_positive(m.kappa0, "kappa0");
                   require_positive(m.a0, "a0");
                   require_positive(m.b0, "b0");
                   if (!std::isfinite(m.mu0)) throw std::invalid_argument("mu0 must be finite");
                 },
                 [](const PoissonGamma& m) {
                   require_positive(m.a0, "a0");
                   require_positive(m.b0, "b0");
                 },
             },
             model_);
}

std::string_view Family::name() const {
  return std::visit(overloaded{
                        [](const NormalKnownVar&) { return std::string_view("normal_known_var"); },
                        [](const NormalMeanVar&) { return std::string_view("normal_mean_var"); },
                        [](const PoissonGamma&) { return std::string_view("poisson"); },
                    },
                    model_);
}

std::size_t Family::param_dim() const { return domain_.dim(); }

std::vector<double> Family::base_hyperparams() const {
  return std::visit(overloaded{
                        [](const NormalKnownVar& m) { return std::vector{m.mu0, m.tau0}; },
                        [](const NormalMeanVar& m) {
                          return std::vector{m.mu0, m.kappa0, m.a0, m.b0};
                        },
                        [](const PoissonGamma& m) { return std::vector{m.a0, m.b0}; },
                    },
                    model_);
}

bool Family::data_in_support(std::span<const double> x) const {
  if (x.size() != data_dim() || !std::isfinite(x[0])) return false;
  if (std::holds_alternative<PoissonGamma>(model_)) {
    return x[0] >= 0.0 && std::floor(x[0]) == x[0];
  }
  return true;
}

void Family::check_dataset(const Dataset& data) const {
  if (data.dim != data_dim()) {
    throw std::invalid_argument("dataset dimension differs from family data dimension");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data_in_support(data.point(i))) {
      std::ostringstream msg;
      msg << "observation " << i << " = " << data.point(i)[0] << " outside the support of "
          << name();
      throw std::invalid_argument(msg.str());
    }
  }
}

double Family::component_log_density(std::span<const double> v,
                                     std::span<const double> x) const {
  if (!domain_.contains(v)) throw std::domain_error("component parameter outside V");
  if (!data_in_support(x)) return kNegInf;
  return std::visit(overloaded{
                        [&](const NormalKnownVar& m) {
                          return normal_log_density(x[0], v[0], m.sigma * m.sigma);
                        },
                        [&](const NormalMeanVar&) { return normal_log_density(x[0], v[0], v[1]); },
                        [&](const PoissonGamma&) {
                          return x[0] * std::log(v[0]) - v[0] - log_gamma(x[0] + 1.0);
                        },
                    },
                    model_);
}

void Family::sample_component(std::span<const double> v, Rng& rng, std::span<double> out) const {
  if (!domain_.contains(v)) throw std::domain_error("component parameter outside V");
  std::visit(overloaded{
                 [&](const NormalKnownVar& m) {
                   out[0] = std::normal_distribution<double>(v[0], m.sigma)(rng);
                 },
                 [&](const NormalMeanVar&) {
                   out[0] = std::normal_distribution<double>(v[0], std::sqrt(v[1]))(rng);
                 },
                 [&](const PoissonGamma&) {
                   out[0] = static_cast<double>(std::poisson_distribution<long long>(v[0])(rng));
                 },
             },
             model_);
}

double Family::base_log_density(std::span<const double> v) const {
  if (!domain_.contains(v)) return kNegInf;
  return std::visit(
      overloaded{
          [&](const NormalKnownVar& m) { return normal_log_density(v[0], m.mu0, m.tau0 * m.tau0); },
          [&](const NormalMeanVar& m) {
            const double var = v[1];
            const double log_ig = m.a0 * std::log(m.b0) - log_gamma(m.a0) -
                                  (m.a0 + 1.0) * std::log(var) - m.b0 / var;
            return log_ig + normal_log_density(v[0], m.mu0, var / m.kappa0);
          },
          [&](const PoissonGamma& m) {
            return m.a0 * std::log(m.b0) - log_gamma(m.a0) + (m.a0 - 1.0) * std::log(v[0]) -
                   m.b0 * v[0];
          },
      },
      model_);
}

void Family::sample_base(Rng& rng, std::span<double> out) const {
  sample_param_posterior(ClusterStats{}, rng, out);
}

ClusterStats Family::stats_of(std::span<const double> x) const {
  ClusterStats st;
  add_point(st, x);
  return st;
}

void Family::add_point(ClusterStats& stats, std::span<const double> x) const {
  stats.count += 1;
  stats.s[0] += x[0];
  if (std::holds_alternative<PoissonGamma>(model_)) {
    stats.s[1] += log_gamma(x[0] + 1.0);
  } else {
    stats.s[1] += x[0] * x[0];
  }
}

void Family::remove_point(ClusterStats& stats, std::span<const double> x) const {
  if (stats.count == 0) throw std::logic_error("remove_point: cluster is empty");
  stats.count -= 1;
  if (stats.count == 0) {
    stats.s = {0.0, 0.0};
    return;
  }
  stats.s[0] -= x[0];
  if (std::holds_alternative<PoissonGamma>(model_)) {
    stats.s[1] -= log_gamma(x[0] + 1.0);
  } else {
    stats.s[1] -= x[0] * x[0];
  }
}

ClusterStats Family::stats_of(const Dataset& data, std::span<const std::size_t> indices) const {
  ClusterStats st;
  for (std::size_t i : indices) add_point(st, data.point(i));
  return st;
}

double Family::cluster_log_marginal(const ClusterStats& stats) const {
  if (stats.count == 0) return 0.0;
  const double n = static_cast<double>(stats.count);
  return std::visit(
      overloaded{
          [&](const NormalKnownVar& m) {
            const double s2 = m.sigma * m.sigma;
            const double t2 = m.tau0 * m.tau0;
            const double centered_sum = stats.s[0] - n * m.mu0;
            const double centered_sq = stats.s[1] - 2.0 * m.mu0 * stats.s[0] + n * m.mu0 * m.mu0;
            const double denom = s2 + n * t2;
            return -0.5 * n * (kLogTwoPi + std::log(s2)) + 0.5 * std::log(s2 / denom) -
                   0.5 * centered_sq / s2 + 0.5 * t2 * centered_sum * centered_sum / (s2 * denom);
          },
          [&](const NormalMeanVar& m) {
            const double kn = m.kappa0 + n;
            const double mun = (m.kappa0 * m.mu0 + stats.s[0]) / kn;
            const double an = m.a0 + 0.5 * n;
            const double bn =
                m.b0 + 0.5 * (stats.s[1] + m.kappa0 * m.mu0 * m.mu0 - kn * mun * mun);
            return -0.5 * n * kLogTwoPi + 0.5 * (std::log(m.kappa0) - std::log(kn)) +
                   m.a0 * std::log(m.b0) - an * std::log(bn) + log_gamma(an) - log_gamma(m.a0);
          },
          [&](const PoissonGamma& m) {
            const double an = m.a0 + stats.s[0];
            return m.a0 * std::log(m.b0) - log_gamma(m.a0) + log_gamma(an) -
                   an * std::log(m.b0 + n) - stats.s[1];
          },
      },
      model_);
}

void Family::sample_param_posterior(const ClusterStats& stats, Rng& rng,
                                    std::span<double> out) const {
  const double n = static_cast<double>(stats.count);
  std::visit(overloaded{
                 [&](const NormalKnownVar& m) {
                   const double prec = 1.0 / (m.tau0 * m.tau0) + n / (m.sigma * m.sigma);
                   const double mean =
                       (m.mu0 / (m.tau0 * m.tau0) + stats.s[0] / (m.sigma * m.sigma)) / prec;
                   out[0] = std::normal_distribution<double>(mean, std::sqrt(1.0 / prec))(rng);
                 },
                 [&](const NormalMeanVar& m) {
                   const double kn = m.kappa0 + n;
                   const double mun = (m.kappa0 * m.mu0 + stats.s[0]) / kn;
                   const double an = m.a0 + 0.5 * n;
                   const double bn = std::max(
                       m.b0 + 0.5 * (stats.s[1] + m.kappa0 * m.mu0 * m.mu0 - kn * mun * mun),
                       m.b0 * std::numeric_limits<double>::epsilon());
                   double var = 0.0;
                   do {
                     var = 1.0 / sample_gamma(an, bn, rng);
                   } while (!(var > 0.0) || !std::isfinite(var));
                   out[0] = std::normal_distribution<double>(mun, std::sqrt(var / kn))(rng);
                   out[1] = var;
                 },
                 [&](const PoissonGamma& m) {
                   double rate = 0.0;
                   do {
                     rate = sample_gamma(m.a0 + stats.s[0], m.b0 + n, rng);
                   } while (!(rate > 0.0));
                   out[0] = rate;
                 },
             },
             model_);
}

std::vector<double> Family::sample_param_posterior(const ClusterStats& stats, Rng& rng) const {
  std::vector<double> out(param_dim());
  sample_param_posterior(stats, rng, out);
  return out;
}

ValidationReport validate(const MixtureParams& theta, const Family& family) {
  return validate(theta, family.domain());
}

double mixture_log_density(const Family& family, const MixtureParams& theta,
                           std::span<const double> x) {
  std::vector<double> terms(theta.k());
  for (std::size_t i = 0; i < theta.k(); ++i) {
    terms[i] = std::log(theta.weight(i)) + family.component_log_density(theta.row(i), x);
  }
  return log_sum_exp(terms);
}

SimulatedData sample_mixture(const Family& family, const MixtureParams& theta, std::size_t n,
                             Rng& rng) {
  SimulatedData out;
  out.data.dim = family.data_dim();
  out.data.values.resize(n * out.data.dim);
  out.labels.resize(n);
  std::discrete_distribution<std::size_t> pick(theta.weights().begin(), theta.weights().end());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = pick(rng);
    out.labels[i] = label;
    family.sample_component(
        theta.row(label), rng,
        std::span<double>(out.data.values).subspan(i * out.data.dim, out.data.dim));
  }
  return out;
}

double sample_gamma(double shape, double rate, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  // Log-scale gamma draws: G(a) = G(a + 1) * U^(1/a) keeps tiny shapes from
  // underflowing before normalization.
  std::vector<double> logs(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    double g = 0.0;
    do {
      g = sample_gamma(alpha[i] + 1.0, 1.0, rng);
    } while (!(g > 0.0));
    double u = 0.0;
    do {
      u = uniform01(rng);
    } while (!(u > 0.0));
    logs[i] = std::log(g) + std::log(u) / alpha[i];
  }
  const double lse = log_sum_exp(logs);
  std::vector<double> w(alpha.size());
  constexpr double tiny = std::numeric_limits<double>::min();
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::max(std::exp(logs[i] - lse), tiny);
    total += w[i];
  }
  const double below_one = w.size() > 1 ? std::nextafter(1.0, 0.0) : 1.0;
  for (double& x : w) x = std::min(x / total, below_one);
  return w;
}

}  // namespace fmm
