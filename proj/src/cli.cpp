#include <CLI11.hpp>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "fmm/experiments.hpp"

namespace fmm {

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string engine;
  std::optional<std::size_t> n;
  std::string data;
};

ExperimentConfig load_with_overrides(const CommonArgs& args) {
  std::ifstream in(args.config);
  if (!in) throw ConfigError("cannot open config file " + args.config);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + args.config + ": " + e.what());
  }
  if (doc.is_object()) {
    if (args.seed) doc["master_seed"] = *args.seed;
    if (!args.engine.empty()) doc["engine"] = args.engine;
  }
  return parse_config(doc);
}

/// Runs `body` with the output stream named by --out, or stdout.
int with_output(const CommonArgs& args, std::ostream& stdout_stream,
                const std::function<int(std::ostream&)>& body) {
  if (args.out.empty()) return body(stdout_stream);
  std::ostringstream buffer;
  const int code = body(buffer);
  std::ofstream file(args.out, std::ios::binary);
  if (!file) throw ConfigError("cannot open output file " + args.out);
  file << buffer.str();
  return code;
}

SimulatedData simulate_from(const ExperimentConfig& cfg, std::size_t n) {
  Rng rng(replicate_data_seed(cfg.master_seed, 0));
  return sample_mixture(cfg.prior.family, cfg.theta0, n, rng);
}

Dataset posterior_data(const ExperimentConfig& cfg, const CommonArgs& args) {
  if (!args.data.empty()) {
    std::ifstream in(args.data);
    if (!in) throw ConfigError("cannot open data file " + args.data);
    Dataset data = read_dataset_csv(in);
    cfg.prior.family.check_dataset(data);
    return data;
  }
  return simulate_from(cfg, args.n.value_or(cfg.n_schedule.back())).data;
}

int cmd_simulate(const CommonArgs& args, std::ostream& out) {
  const auto cfg = load_with_overrides(args);
  const auto sim = simulate_from(cfg, args.n.value_or(cfg.n_schedule.back()));
  return with_output(args, out, [&](std::ostream& os) {
    write_dataset_csv(sim, os);
    return 0;
  });
}

int cmd_check_conditions(const CommonArgs& args, std::ostream& out) {
  const auto cfg = load_with_overrides(args);
  const auto report = check_conditions(cfg.prior, cfg.conditions, derive_seed(cfg.master_seed, 3));
  return with_output(args, out, [&](std::ostream& os) {
    os << "condition,name,verdict,method,detail\n";
    for (const auto& v : report.verdicts) {
      os << v.id << "," << v.name << "," << to_string(v.verdict) << "," << v.method << ",\""
         << v.detail << "\"\n";
    }
    return report.any_fail() ? 1 : 0;
  });
}

int cmd_posterior(const CommonArgs& args, std::ostream& out) {
  const auto cfg = load_with_overrides(args);
  const Dataset data = posterior_data(cfg, args);
  Rng rng(engine_seed(cfg.master_seed, 0, 0));
  KPosterior kpost;
  if (cfg.engine == EngineKind::exact) {
    kpost = exact_k_posterior(data, cfg.prior, cfg.k_max, cfg.exact.max_states).k_posterior;
  } else {
    auto opts = cfg.mcmc.options();
    opts.draw_theta = false;
    kpost = mcmc_run(data, cfg.prior, cfg.k_max, opts, rng).k_posterior;
  }
  return with_output(args, out, [&](std::ostream& os) {
    os << std::setprecision(15) << "k,prob,se,trunc_bound,engine\n";
    for (std::size_t k = 1; k <= cfg.k_max; ++k) {
      const double se = kpost.mc_standard_errors.count(k) ? kpost.mc_standard_errors.at(k) : 0.0;
      os << k << "," << kpost.prob(k) << "," << se << "," << kpost.truncation_mass_bound << ","
         << to_string(cfg.engine) << "\n";
    }
    return 0;
  });
}

int cmd_validate_sampler(const CommonArgs& args, std::ostream& out, std::ostream& err) {
  const auto cfg = load_with_overrides(args);
  const auto& val = cfg.validate;
  const Dataset data = simulate_from(cfg, args.n.value_or(val.n)).data;
  const auto exact = exact_k_posterior(data, cfg.prior, val.k_max).k_posterior;
  auto opts = McmcOptions::with_defaults(val.sweeps);
  opts.dimension_moves_per_sweep = cfg.mcmc.dimension_moves;
  opts.draw_theta = false;
  Rng rng(engine_seed(cfg.master_seed, 0, 0));
  const auto chain = mcmc_run(data, cfg.prior, val.k_max, opts, rng);
  const double tv = total_variation(exact.probs, chain.k_posterior.probs);
  const bool ok = tv <= val.tolerance;
  if (!ok) err << "validate-sampler: TV " << tv << " exceeds tolerance " << val.tolerance << "\n";
  return with_output(args, out, [&](std::ostream& os) {
    os << std::setprecision(15) << "k,exact,mcmc,mcmc_se,tv,tolerance\n";
    for (std::size_t k = 1; k <= val.k_max; ++k) {
      const double se = chain.k_posterior.mc_standard_errors.count(k)
                            ? chain.k_posterior.mc_standard_errors.at(k)
                            : 0.0;
      os << k << "," << exact.prob(k) << "," << chain.k_posterior.prob(k) << "," << se << ","
         << tv << "," << val.tolerance << "\n";
    }
    return ok ? 0 : 1;
  });
}

int cmd_consistency_curve(const CommonArgs& args, std::ostream& out) {
  const auto cfg = load_with_overrides(args);
  const auto records = run_consistency_curve(cfg);
  return with_output(args, out, [&](std::ostream& os) {
    write_consistency_csv(records, cfg.record_walltime, os);
    return 0;
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite mixture posterior consistency experiments", "fmm"};
  app.require_subcommand(1);
  CommonArgs args;

  auto add_common = [&](CLI::App* sub, bool with_engine, bool with_n) {
    sub->add_option("--config", args.config, "JSON configuration file")->required();
    sub->add_option("--out", args.out, "output CSV path (default: stdout)");
    sub->add_option("--seed", args.seed, "master seed, overriding the config");
    if (with_engine) {
      sub->add_option("--engine", args.engine, "inference engine")
          ->check(CLI::IsMember({"exact", "mcmc"}));
    }
    if (with_n) sub->add_option("--n", args.n, "number of observations");
  };
  auto* simulate = app.add_subcommand("simulate", "draw a dataset from theta0");
  add_common(simulate, false, true);
  auto* check = app.add_subcommand("check-conditions", "numeric checks of the prior conditions");
  add_common(check, false, false);
  auto* posterior = app.add_subcommand("posterior", "posterior over the number of components");
  add_common(posterior, true, true);
  posterior->add_option("--data", args.data, "dataset CSV (default: simulate from theta0)");
  auto* validate = app.add_subcommand("validate-sampler", "MCMC vs exact enumeration");
  add_common(validate, false, true);
  auto* curve = app.add_subcommand("consistency-curve", "posterior functionals across n");
  add_common(curve, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(args, out);
    if (check->parsed()) return cmd_check_conditions(args, out);
    if (posterior->parsed()) return cmd_posterior(args, out);
    if (validate->parsed()) return cmd_validate_sampler(args, out, err);
    if (curve->parsed()) return cmd_consistency_curve(args, out);
  } catch (const std::exception& e) {
    err << "fmm: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace fmm
