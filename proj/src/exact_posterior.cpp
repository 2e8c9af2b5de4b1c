#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fmm/posterior.hpp"

namespace fmm {

namespace {

void require_inference_support(const Dataset& data, const PriorSpec& prior) {
  if (!prior.supports_inference()) {
    throw UnsupportedPrior(
        "posterior inference needs a Dirichlet weights prior with iid conjugate G0");
  }
  prior.family.check_dataset(data);
}

std::size_t checked_power(std::size_t base, std::size_t exp, std::size_t cap) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (out > cap / base) return cap + 1;
    out *= base;
  }
  return out;
}

void check_budget(std::size_t n, std::size_t k_max, std::size_t budget) {
  std::size_t total = 0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    total += checked_power(k, n, budget);
    if (total > budget) {
      throw BudgetExceeded("exact enumeration over (k, z) exceeds the budget of " +
                           std::to_string(budget) + " assignments");
    }
  }
}

/// Streaming log-sum-exp accumulator.
struct LogAccumulator {
  double max = kNegInf;
  double scaled = 0.0;

  void add(double x) {
    if (x == kNegInf) return;
    if (x > max) {
      scaled = scaled * std::exp(max - x) + 1.0;
      max = x;
    } else {
      scaled += std::exp(x - max);
    }
  }
  double value() const { return max == kNegInf ? kNegInf : max + std::log(scaled); }
};

/// Visits every z in {0..k-1}^n in odometer order (code = position in that
/// order) with log p(z | k) + sum_j log m(cluster j). Each step touches only
/// the clusters whose membership changed.
template <typename Visitor>
void enumerate_assignments(const Dataset& data, const PriorSpec& prior, std::size_t k,
                           Visitor&& visit) {
  const std::size_t n = data.size();
  const Family& family = prior.family;
  const auto alpha = prior.weights_prior.alpha(k);
  const double total_alpha = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const double base = log_gamma(total_alpha) - log_gamma(static_cast<double>(n) + total_alpha);

  std::vector<std::size_t> z(n, 0);
  std::vector<ClusterStats> stats(k);
  for (std::size_t i = 0; i < n; ++i) family.add_point(stats[0], data.point(i));
  std::vector<double> terms(k, 0.0);
  auto refresh = [&](std::size_t j) {
    const auto& st = stats[j];
    terms[j] = st.count == 0 ? 0.0
                             : log_gamma(static_cast<double>(st.count) + alpha[j]) -
                                   log_gamma(alpha[j]) + family.cluster_log_marginal(st);
  };
  for (std::size_t j = 0; j < k; ++j) refresh(j);

  std::size_t code = 0;
  for (;;) {
    double value = base;
    for (double t : terms) value += t;
    visit(code, z, value);
    ++code;
    std::size_t i = n;
    for (;;) {
      if (i == 0) return;
      --i;
      const std::size_t old = z[i];
      const std::size_t next = old + 1 < k ? old + 1 : 0;
      family.remove_point(stats[old], data.point(i));
      family.add_point(stats[next], data.point(i));
      z[i] = next;
      refresh(old);
      refresh(next);
      if (next != 0) break;
    }
  }
}

}  // namespace

double KPosterior::prob(std::size_t k) const {
  const auto it = probs.find(k);
  return it == probs.end() ? 0.0 : it->second;
}

ExactPosterior exact_k_posterior(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                                 std::size_t budget) {
  require_inference_support(data, prior);
  if (k_max < 1) throw std::invalid_argument("exact_k_posterior: k_max must be >= 1");
  check_budget(data.size(), k_max, budget);

  ExactPosterior out;
  out.k_max = k_max;
  out.log_prior_k.resize(k_max);
  out.log_evidence_k.resize(k_max, kNegInf);
  std::vector<double> log_joint(k_max, kNegInf);
  for (std::size_t k = 1; k <= k_max; ++k) {
    out.log_prior_k[k - 1] = prior.k_prior.log_pmf(k);
    if (out.log_prior_k[k - 1] == kNegInf) continue;
    LogAccumulator acc;
    enumerate_assignments(data, prior, k,
                          [&](std::size_t, const std::vector<std::size_t>&, double v) { acc.add(v); });
    out.log_evidence_k[k - 1] = acc.value();
    log_joint[k - 1] = out.log_prior_k[k - 1] + out.log_evidence_k[k - 1];
  }
  const double total = log_sum_exp(log_joint);
  out.log_evidence = total - log_sum_exp(out.log_prior_k);
  for (std::size_t k = 1; k <= k_max; ++k) {
    out.k_posterior.probs[k] = std::exp(log_joint[k - 1] - total);
    out.k_posterior.mc_standard_errors[k] = 0.0;
  }
  out.k_posterior.truncation_mass_bound = prior.k_prior.tail_mass(k_max);
  return out;
}

AssignmentState JointTable::decode(std::size_t k, std::size_t code) const {
  AssignmentState s{k, std::vector<std::size_t>(n, 0)};
  for (std::size_t i = n; i-- > 0;) {
    s.z[i] = code % k;
    code /= k;
  }
  return s;
}

std::size_t JointTable::encode(const AssignmentState& s) const {
  std::size_t code = 0;
  for (std::size_t label : s.z) code = code * s.k + label;
  return code;
}

double JointTable::prob(const AssignmentState& s) const {
  if (s.k < 1 || s.k > k_max || s.z.size() != n) return 0.0;
  return std::exp(log_joint[s.k - 1][encode(s)]);
}

JointTable exact_joint(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                       std::size_t budget) {
  require_inference_support(data, prior);
  if (k_max < 1) throw std::invalid_argument("exact_joint: k_max must be >= 1");
  check_budget(data.size(), k_max, budget);

  JointTable table;
  table.n = data.size();
  table.k_max = k_max;
  table.log_joint.resize(k_max);
  LogAccumulator total;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double log_pi = prior.k_prior.log_pmf(k);
    auto& row = table.log_joint[k - 1];
    row.assign(checked_power(k, table.n, budget), kNegInf);
    if (log_pi == kNegInf) continue;
    enumerate_assignments(data, prior, k,
                          [&](std::size_t code, const std::vector<std::size_t>&, double v) {
                            row[code] = log_pi + v;
                            total.add(row[code]);
                          });
  }
  const double norm = total.value();
  for (auto& row : table.log_joint) {
    for (double& v : row) v -= norm;
  }
  return table;
}

MixtureParams draw_theta_given_assignment(const Dataset& data, const PriorSpec& prior,
                                          const AssignmentState& state, Rng& rng) {
  const Family& family = prior.family;
  std::vector<ClusterStats> stats(state.k);
  for (std::size_t i = 0; i < state.z.size(); ++i) family.add_point(stats[state.z[i]], data.point(i));
  auto alpha = prior.weights_prior.alpha(state.k);
  for (std::size_t j = 0; j < state.k; ++j) alpha[j] += static_cast<double>(stats[j].count);
  auto w = sample_dirichlet(alpha, rng);
  const std::size_t dim = family.param_dim();
  std::vector<double> v(state.k * dim);
  for (std::size_t j = 0; j < state.k; ++j) {
    family.sample_param_posterior(stats[j], rng, std::span<double>(v).subspan(j * dim, dim));
  }
  return MixtureParams::normalized(std::move(w), std::move(v), dim);
}

ThetaDraws exact_theta_draws(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                             std::size_t n_draws, Rng& rng, DrawScheme scheme,
                             std::size_t budget) {
  if (n_draws == 0) throw std::invalid_argument("exact_theta_draws: n_draws must be >= 1");
  const JointTable table = exact_joint(data, prior, k_max, budget);

  // Cumulative probabilities per k, and the total mass of each k.
  std::vector<std::vector<double>> cdf(k_max);
  std::vector<double> mass(k_max, 0.0);
  for (std::size_t k = 1; k <= k_max; ++k) {
    auto& c = cdf[k - 1];
    c.resize(table.log_joint[k - 1].size());
    double acc = 0.0;
    for (std::size_t code = 0; code < c.size(); ++code) {
      acc += std::exp(table.log_joint[k - 1][code]);
      c[code] = acc;
    }
    mass[k - 1] = acc;
  }
  auto draw_code = [&](std::size_t k) {
    const auto& c = cdf[k - 1];
    const double u = uniform01(rng) * c.back();
    const auto it = std::upper_bound(c.begin(), c.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - c.begin(),
                                                             static_cast<std::ptrdiff_t>(c.size()) - 1));
  };

  ThetaDraws out;
  out.iterations = n_draws;
  if (scheme == DrawScheme::iid) {
    out.provenance = Provenance::exact_iid;
    std::vector<double> k_cdf(k_max);
    std::partial_sum(mass.begin(), mass.end(), k_cdf.begin());
    for (std::size_t t = 0; t < n_draws; ++t) {
      const double u = uniform01(rng) * k_cdf.back();
      std::size_t k = static_cast<std::size_t>(std::upper_bound(k_cdf.begin(), k_cdf.end(), u) -
                                               k_cdf.begin()) + 1;
      k = std::min(k, k_max);
      while (mass[k - 1] == 0.0) --k;
      out.draws.push_back(draw_theta_given_assignment(data, prior, table.decode(k, draw_code(k)), rng));
      out.weights.push_back(1.0 / static_cast<double>(n_draws));
    }
    return out;
  }

  out.provenance = Provenance::exact_stratified;
  const double total_mass = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double p = mass[k - 1] / total_mass;
    if (!(p > 0.0)) continue;
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(p * static_cast<double>(n_draws))));
    out.stratum_mass[k] = p;
    for (std::size_t t = 0; t < m; ++t) {
      out.draws.push_back(draw_theta_given_assignment(data, prior, table.decode(k, draw_code(k)), rng));
      out.weights.push_back(p / static_cast<double>(m));
    }
  }
  return out;
}

}  // namespace fmm
