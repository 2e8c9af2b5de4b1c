#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fmm/posterior.hpp"

namespace fmm {

namespace {

std::size_t empty_count(std::span<const std::size_t> counts) {
  return static_cast<std::size_t>(std::count(counts.begin(), counts.end(), std::size_t{0}));
}

double log_target_k(std::span<const std::size_t> counts, const PriorSpec& prior) {
  return prior.k_prior.log_pmf(counts.size()) +
         log_partition_prior_counts(counts, prior.weights_prior);
}

/// log Metropolis-Hastings ratio for inserting an empty component at `position`.
double log_add_ratio(std::span<const std::size_t> counts, std::size_t position,
                     const PriorSpec& prior) {
  const std::size_t k = counts.size();
  std::vector<std::size_t> next(counts.begin(), counts.end());
  next.insert(next.begin() + static_cast<std::ptrdiff_t>(position), 0);
  const double e_next = static_cast<double>(empty_count(next));
  return log_target_k(next, prior) - log_target_k(counts, prior) - std::log(e_next) +
         std::log(static_cast<double>(k + 1));
}

/// log Metropolis-Hastings ratio for deleting the empty component `label`.
double log_remove_ratio(std::span<const std::size_t> counts, std::size_t label,
                        const PriorSpec& prior) {
  const std::size_t k = counts.size();
  std::vector<std::size_t> next(counts.begin(), counts.end());
  next.erase(next.begin() + static_cast<std::ptrdiff_t>(label));
  const double e = static_cast<double>(empty_count(counts));
  return log_target_k(next, prior) - log_target_k(counts, prior) -
         std::log(static_cast<double>(k)) + std::log(e);
}

double accept_prob(double log_ratio) { return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio); }

}  // namespace

std::vector<DimensionMove> dimension_move_options(std::span<const std::size_t> counts,
                                                  const PriorSpec& prior, std::size_t k_max) {
  std::vector<DimensionMove> out;
  const std::size_t k = counts.size();
  if (k < k_max) {
    for (std::size_t p = 0; p <= k; ++p) {
      const double q = 0.5 / static_cast<double>(k + 1);
      out.push_back({MoveKind::add, p, q * accept_prob(log_add_ratio(counts, p, prior))});
    }
  }
  const std::size_t e = empty_count(counts);
  if (k > 1 && e > 0) {
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      const double q = 0.5 / static_cast<double>(e);
      out.push_back({MoveKind::remove, j, q * accept_prob(log_remove_ratio(counts, j, prior))});
    }
  }
  return out;
}

AssignmentState apply_move(const AssignmentState& s, const DimensionMove& move) {
  AssignmentState out = s;
  if (move.kind == MoveKind::add) {
    out.k += 1;
    for (auto& label : out.z) {
      if (label >= move.position) ++label;
    }
  } else {
    out.k -= 1;
    for (auto& label : out.z) {
      if (label > move.position) --label;
    }
  }
  return out;
}

McmcOptions McmcOptions::with_defaults(std::size_t iters) {
  McmcOptions o;
  o.iters = iters;
  o.burn_in = iters / 5;
  o.thin = 1;
  return o;
}

double Diagnostics::acceptance_rate() const {
  return dimension_proposals == 0
             ? 0.0
             : static_cast<double>(dimension_accepts) / static_cast<double>(dimension_proposals);
}

std::size_t Diagnostics::distinct_k_visited() const {
  return std::set<std::size_t>(k_trace.begin(), k_trace.end()).size();
}

McmcResult mcmc_run(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                    const McmcOptions& options, Rng& rng) {
  if (!prior.supports_inference()) {
    throw UnsupportedPrior(
        "posterior inference needs a Dirichlet weights prior with iid conjugate G0");
  }
  if (k_max < 2) throw std::invalid_argument("mcmc_run: k_max must be >= 2");
  if (options.thin == 0) throw std::invalid_argument("mcmc_run: thin must be >= 1");
  if (options.burn_in >= options.iters) {
    throw std::invalid_argument("mcmc_run: burn_in must be smaller than iters");
  }
  prior.family.check_dataset(data);

  const Family& family = prior.family;
  const std::size_t n = data.size();
  AssignmentState state{std::clamp<std::size_t>(options.initial_k, 1, k_max),
                        std::vector<std::size_t>(n, 0)};
  std::vector<std::size_t> counts(state.k, 0);
  std::vector<ClusterStats> stats(state.k);
  std::vector<double> marg(state.k, 0.0);
  auto rebuild = [&] {
    counts.assign(state.k, 0);
    stats.assign(state.k, ClusterStats{});
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[state.z[i]];
      family.add_point(stats[state.z[i]], data.point(i));
    }
    marg.resize(state.k);
    for (std::size_t j = 0; j < state.k; ++j) marg[j] = family.cluster_log_marginal(stats[j]);
  };
  rebuild();

  McmcResult result;
  result.draws.provenance = Provenance::mcmc;
  result.draws.iterations = options.iters;
  Diagnostics& diag = result.diagnostics;
  diag.k_trace.reserve(options.iters);
  std::vector<double> log_w(k_max);

  for (std::size_t sweep = 0; sweep < options.iters; ++sweep) {
    // (a) single-site Gibbs on each label.
    const auto alpha = prior.weights_prior.alpha(state.k);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.point(i);
      const std::size_t old = state.z[i];
      family.remove_point(stats[old], x);
      --counts[old];
      marg[old] = family.cluster_log_marginal(stats[old]);
      for (std::size_t j = 0; j < state.k; ++j) {
        ClusterStats with = stats[j];
        family.add_point(with, x);
        log_w[j] = std::log(static_cast<double>(counts[j]) + alpha[j]) +
                   family.cluster_log_marginal(with) - marg[j];
      }
      const std::size_t next =
          sample_log_categorical(std::span<const double>(log_w).first(state.k), rng);
      family.add_point(stats[next], x);
      ++counts[next];
      marg[next] = family.cluster_log_marginal(stats[next]);
      state.z[i] = next;
      ++diag.label_updates;
      if (next != old) ++diag.label_changes;
    }

    // (b) add / delete an empty component.
    for (std::size_t m = 0; m < options.dimension_moves_per_sweep; ++m) {
      ++diag.dimension_proposals;
      const bool propose_add = uniform01(rng) < 0.5;
      const std::size_t k = state.k;
      if (propose_add) {
        if (k >= k_max) {
          ++diag.truncation_rejections;
          continue;
        }
        const std::size_t p = std::uniform_int_distribution<std::size_t>(0, k)(rng);
        if (uniform01(rng) < accept_prob(log_add_ratio(counts, p, prior))) {
          state = apply_move(state, {MoveKind::add, p, 0.0});
          counts.insert(counts.begin() + static_cast<std::ptrdiff_t>(p), 0);
          stats.insert(stats.begin() + static_cast<std::ptrdiff_t>(p), ClusterStats{});
          marg.insert(marg.begin() + static_cast<std::ptrdiff_t>(p), 0.0);
          ++diag.dimension_accepts;
        }
      } else {
        const std::size_t e = empty_count(counts);
        if (k == 1 || e == 0) continue;
        std::size_t pick = std::uniform_int_distribution<std::size_t>(0, e - 1)(rng);
        std::size_t j = 0;
        for (;; ++j) {
          if (counts[j] == 0 && pick-- == 0) break;
        }
        if (uniform01(rng) < accept_prob(log_remove_ratio(counts, j, prior))) {
          state = apply_move(state, {MoveKind::remove, j, 0.0});
          counts.erase(counts.begin() + static_cast<std::ptrdiff_t>(j));
          stats.erase(stats.begin() + static_cast<std::ptrdiff_t>(j));
          marg.erase(marg.begin() + static_cast<std::ptrdiff_t>(j));
          ++diag.dimension_accepts;
        }
      }
    }

    // Incremental sums drift; refresh them once per sweep.
    rebuild();
    diag.k_trace.push_back(state.k);

    if (sweep < options.burn_in || (sweep - options.burn_in) % options.thin != 0) continue;
    result.kept_k.push_back(state.k);
    if (options.record_states) result.states.push_back(state);
    if (options.draw_theta) {
      result.draws.draws.push_back(draw_theta_given_assignment(data, prior, state, rng));
    }
  }

  const double w = result.draws.draws.empty()
                       ? 0.0
                       : 1.0 / static_cast<double>(result.draws.draws.size());
  result.draws.weights.assign(result.draws.draws.size(), w);
  result.k_posterior = estimate_k_posterior(result.kept_k, prior.k_prior.tail_mass(k_max));
  return result;
}

// ---------------------------------------------------------------------------

double batch_means_standard_error(std::span<const double> xs, std::size_t batches) {
  const std::size_t n = xs.size();
  const std::size_t b = std::min(batches, n);
  if (b < 2) return 0.0;
  std::vector<double> means(b);
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t lo = j * n / b;
    const std::size_t hi = (j + 1) * n / b;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += xs[i];
    means[j] = s / static_cast<double>(hi - lo);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(b);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return std::sqrt(ss / (static_cast<double>(b) * static_cast<double>(b - 1)));
}

namespace {

template <typename Pred>
Estimate estimate_indicator(const ThetaDraws& draws, Pred&& pred) {
  if (draws.size() == 0) throw std::invalid_argument("estimate: no draws");
  std::vector<double> ind(draws.size());
  double value = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    ind[i] = pred(draws.draws[i]) ? 1.0 : 0.0;
    if (ind[i] != 0.0) value += draws.weights[i];
  }
  double se = 0.0;
  switch (draws.provenance) {
    case Provenance::mcmc:
      se = batch_means_standard_error(ind);
      break;
    case Provenance::exact_iid: {
      const double p = std::clamp(value, 0.0, 1.0);
      se = std::sqrt(p * (1.0 - p) / static_cast<double>(draws.size()));
      break;
    }
    case Provenance::exact_stratified: {
      // Strata are the values of k; within-stratum draws are i.i.d.
      std::map<std::size_t, std::pair<double, double>> tally;  // k -> (hits, count)
      for (std::size_t i = 0; i < draws.size(); ++i) {
        auto& t = tally[draws.draws[i].k()];
        t.first += ind[i];
        t.second += 1.0;
      }
      double var = 0.0;
      for (const auto& [k, t] : tally) {
        const double mass = draws.stratum_mass.at(k);
        const double p = t.first / t.second;
        var += mass * mass * p * (1.0 - p) / t.second;
      }
      se = std::sqrt(var);
      break;
    }
  }
  return {value, se};
}

}  // namespace

KPosterior estimate_k_posterior(const ThetaDraws& draws, double truncation_mass_bound) {
  if (draws.size() == 0) throw std::invalid_argument("estimate_k_posterior: no draws");
  std::set<std::size_t> ks;
  for (const auto& d : draws.draws) ks.insert(d.k());
  KPosterior out;
  out.truncation_mass_bound = truncation_mass_bound;
  for (std::size_t k : ks) {
    const auto e = estimate_indicator(draws, [k](const MixtureParams& t) { return t.k() == k; });
    out.probs[k] = e.value;
    out.mc_standard_errors[k] = e.standard_error;
  }
  return out;
}

KPosterior estimate_k_posterior(std::span<const std::size_t> k_chain,
                                double truncation_mass_bound) {
  if (k_chain.empty()) throw std::invalid_argument("estimate_k_posterior: empty chain");
  std::set<std::size_t> ks(k_chain.begin(), k_chain.end());
  KPosterior out;
  out.truncation_mass_bound = truncation_mass_bound;
  const double w = 1.0 / static_cast<double>(k_chain.size());
  std::vector<double> ind(k_chain.size());
  for (std::size_t k : ks) {
    double value = 0.0;
    for (std::size_t i = 0; i < k_chain.size(); ++i) {
      ind[i] = k_chain[i] == k ? 1.0 : 0.0;
      if (ind[i] != 0.0) value += w;
    }
    out.probs[k] = value;
    out.mc_standard_errors[k] = batch_means_standard_error(ind);
  }
  return out;
}

Estimate estimate_neighborhood_prob(const ThetaDraws& draws, const NeighborhoodSpec& nbhd) {
  return estimate_indicator(draws,
                            [&](const MixtureParams& t) { return in_neighborhood(t, nbhd); });
}

double total_variation(const std::map<std::size_t, double>& p,
                       const std::map<std::size_t, double>& q) {
  std::set<std::size_t> keys;
  for (const auto& [k, v] : p) keys.insert(k);
  for (const auto& [k, v] : q) keys.insert(k);
  double tv = 0.0;
  for (std::size_t k : keys) {
    const auto a = p.count(k) ? p.at(k) : 0.0;
    const auto b = q.count(k) ? q.at(k) : 0.0;
    tv += std::abs(a - b);
  }
  return 0.5 * tv;
}

}  // namespace fmm
