#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmm/families.hpp"
#include "fmm/param_space.hpp"
#include "fmm/posterior.hpp"
#include "fmm/priors.hpp"

namespace fmm {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class EngineKind { exact, mcmc };

struct ExactEngineConfig {
  std::size_t draws = 4000;
  std::size_t max_states = kDefaultEnumerationBudget;
};

struct McmcEngineConfig {
  std::size_t iters = 2000;
  std::optional<std::size_t> burn_in;  // defaults to iters / 5
  std::size_t thin = 1;
  std::size_t dimension_moves = 1;

  McmcOptions options() const;
};

struct ValidateConfig {
  std::size_t n = 6;
  std::size_t k_max = 3;
  std::size_t sweeps = 200'000;
  double tolerance = 0.02;
};

struct ExperimentConfig {
  PriorSpec prior;
  MixtureParams theta0;
  std::vector<std::size_t> n_schedule;
  std::vector<double> epsilons;
  std::size_t replicates = 1;
  EngineKind engine = EngineKind::mcmc;
  ExactEngineConfig exact;
  McmcEngineConfig mcmc;
  std::uint64_t master_seed = 0;
  std::size_t k_max = 6;
  ConditionBudget conditions;
  ValidateConfig validate;
  bool record_walltime = false;
  std::size_t threads = 0;  // 0: hardware concurrency
};

/// Parses and validates a configuration document. Unknown keys at any level
/// are rejected. An explicit theta0 is collapsed to canonical order; a
/// "draw_from_prior" theta0 is drawn with its own seed and collapsed.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

struct EpsilonResult {
  double eps;
  double pr_nbhd;
  double pr_nbhd_se;
};

struct ConsistencyRecord {
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::size_t k0 = 0;
  double pr_k = 0.0;
  double pr_k_se = 0.0;
  std::vector<EpsilonResult> per_eps;
  double trunc_bound = 0.0;
  EngineKind engine = EngineKind::mcmc;
  double walltime_ms = 0.0;
  std::string error;
};

/// Seed of replicate r's data stream. Every n in the schedule uses a prefix of
/// this one sequence.
std::uint64_t replicate_data_seed(std::uint64_t master, std::size_t replicate);
/// Seed of the inference engine for replicate r at schedule position i.
std::uint64_t engine_seed(std::uint64_t master, std::size_t replicate, std::size_t schedule_index);

/// Posterior functionals for one dataset: Pr(K = k0) and Pr(B(theta0, eps)) for each eps.
ConsistencyRecord evaluate_dataset(const ExperimentConfig& config, const Dataset& data,
                                   std::uint64_t seed);

/// Records sorted by (n, replicate); replicates run concurrently.
std::vector<ConsistencyRecord> run_consistency_curve(const ExperimentConfig& config);

void write_consistency_csv(const std::vector<ConsistencyRecord>& records, bool record_walltime,
                           std::ostream& out);

void write_dataset_csv(const SimulatedData& sim, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

std::string_view to_string(EngineKind e);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 1 condition or validation failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fmm
