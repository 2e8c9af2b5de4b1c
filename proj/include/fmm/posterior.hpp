#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "fmm/families.hpp"
#include "fmm/numeric.hpp"
#include "fmm/param_space.hpp"
#include "fmm/priors.hpp"

namespace fmm {

/// Latent allocation: k components (empty ones included) and 0-based labels.
struct AssignmentState {
  std::size_t k = 1;
  std::vector<std::size_t> z;

  bool operator==(const AssignmentState&) const = default;
  auto operator<=>(const AssignmentState&) const = default;
};

struct KPosterior {
  std::map<std::size_t, double> probs;
  std::map<std::size_t, double> mc_standard_errors;
  double truncation_mass_bound = 0.0;

  double prob(std::size_t k) const;
};

enum class Provenance { exact_iid, exact_stratified, mcmc };

/// Weighted posterior draws. Stratified exact draws carry the exact posterior
/// mass of each k in `stratum_mass`, spread evenly over that stratum's draws.
struct ThetaDraws {
  std::vector<MixtureParams> draws;
  std::vector<double> weights;
  Provenance provenance = Provenance::mcmc;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::map<std::size_t, double> stratum_mass;

  std::size_t size() const { return draws.size(); }
};

class UnsupportedPrior : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BudgetExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr std::size_t kDefaultEnumerationBudget = 50'000'000;

struct ExactPosterior {
  std::size_t k_max = 0;
  std::vector<double> log_prior_k;     // index k - 1
  std::vector<double> log_evidence_k;  // log sum_z p(z | k) prod_j m(x_j)
  double log_evidence = 0.0;           // log p(data | K <= k_max), prior renormalized
  KPosterior k_posterior;
};

/// Pr(K = k | data) for k <= k_max by summing over every z in {0..k-1}^n.
ExactPosterior exact_k_posterior(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                                 std::size_t budget = kDefaultEnumerationBudget);

/// log p(k, z | data) for every (k <= k_max, z); z is encoded base k, z[0]
/// most significant.
struct JointTable {
  std::size_t n = 0;
  std::size_t k_max = 0;
  std::vector<std::vector<double>> log_joint;  // [k - 1][code]

  AssignmentState decode(std::size_t k, std::size_t code) const;
  std::size_t encode(const AssignmentState& s) const;
  double prob(const AssignmentState& s) const;
};

JointTable exact_joint(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                       std::size_t budget = kDefaultEnumerationBudget);

enum class DrawScheme { iid, stratified_by_k };

ThetaDraws exact_theta_draws(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                             std::size_t n_draws, Rng& rng, DrawScheme scheme = DrawScheme::iid,
                             std::size_t budget = kDefaultEnumerationBudget);

/// (w, v) drawn from their exact conditionals given (k, z) and the data.
MixtureParams draw_theta_given_assignment(const Dataset& data, const PriorSpec& prior,
                                          const AssignmentState& state, Rng& rng);

// ---------------------------------------------------------------------------
// Dimension move: add an empty component at a uniformly chosen position, or
// delete a uniformly chosen empty component; each proposed with probability 1/2.

enum class MoveKind { add, remove };

struct DimensionMove {
  MoveKind kind;
  std::size_t position;  // insertion slot (add) or label removed (remove)
  double probability;    // proposal probability times acceptance probability
};

/// Every non-stay transition of the dimension move from a state with the given
/// occupancy counts; the stay probability is one minus their sum.
std::vector<DimensionMove> dimension_move_options(std::span<const std::size_t> counts,
                                                  const PriorSpec& prior, std::size_t k_max);

AssignmentState apply_move(const AssignmentState& s, const DimensionMove& move);

struct McmcOptions {
  std::size_t iters = 2000;
  std::size_t burn_in = 400;
  std::size_t thin = 1;
  std::size_t dimension_moves_per_sweep = 1;
  std::size_t initial_k = 1;
  bool draw_theta = true;
  bool record_states = false;

  /// Burn-in iters / 5, thinning 1.
  static McmcOptions with_defaults(std::size_t iters);
};

struct Diagnostics {
  std::size_t dimension_proposals = 0;
  std::size_t dimension_accepts = 0;
  std::size_t truncation_rejections = 0;  // add proposals refused at k_max
  std::size_t label_changes = 0;
  std::size_t label_updates = 0;
  std::vector<std::size_t> k_trace;  // every sweep, burn-in included

  double acceptance_rate() const;
  std::size_t distinct_k_visited() const;
};

struct McmcResult {
  ThetaDraws draws;
  KPosterior k_posterior;
  Diagnostics diagnostics;
  std::vector<AssignmentState> states;  // kept sweeps, when record_states
  std::vector<std::size_t> kept_k;
};

McmcResult mcmc_run(const Dataset& data, const PriorSpec& prior, std::size_t k_max,
                    const McmcOptions& options, Rng& rng);

// ---------------------------------------------------------------------------

struct Estimate {
  double value;
  double standard_error;
};

inline constexpr std::size_t kBatchMeansBatches = 50;

/// Batch-means standard error of the mean of a sequence, with 50 batches.
double batch_means_standard_error(std::span<const double> xs,
                                  std::size_t batches = kBatchMeansBatches);

KPosterior estimate_k_posterior(const ThetaDraws& draws, double truncation_mass_bound = 0.0);
KPosterior estimate_k_posterior(std::span<const std::size_t> k_chain,
                                double truncation_mass_bound = 0.0);

Estimate estimate_neighborhood_prob(const ThetaDraws& draws, const NeighborhoodSpec& nbhd);

double total_variation(const std::map<std::size_t, double>& p,
                       const std::map<std::size_t, double>& q);

}  // namespace fmm
