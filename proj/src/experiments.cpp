#include "fmm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace fmm {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
  return obj.at(key);
}

double get_real(const json& obj, const char* key, const std::string& where,
                std::optional<double> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing key \"" + key + "\"");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::uint64_t get_uint(const json& obj, const char* key, const std::string& where,
                       std::optional<std::uint64_t> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing key \"" + key + "\"");
  }
  const auto& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw ConfigError(where + "." + key + ": expected a non-negative integer");
}

bool get_bool(const json& obj, const char* key, const std::string& where, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected a boolean");
  return v.get<bool>();
}

std::string get_kind(const json& obj, const std::string& where) {
  const auto& v = require(obj, "kind", where);
  if (!v.is_string()) throw ConfigError(where + ".kind: expected a string");
  return v.get<std::string>();
}

std::vector<double> get_real_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(where + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Family parse_family(const json& j) {
  const std::string where = "family";
  const std::string kind = get_kind(j, where);
  if (kind == "normal_known_var") {
    check_keys(j, {"kind", "sigma", "mu0", "tau0"}, where);
    return Family(NormalKnownVar{get_real(j, "sigma", where), get_real(j, "mu0", where, 0.0),
                                 get_real(j, "tau0", where)});
  }
  if (kind == "normal_mean_var") {
    check_keys(j, {"kind", "mu0", "kappa0", "a0", "b0"}, where);
    return Family(NormalMeanVar{get_real(j, "mu0", where, 0.0), get_real(j, "kappa0", where),
                                get_real(j, "a0", where), get_real(j, "b0", where)});
  }
  if (kind == "poisson") {
    check_keys(j, {"kind", "a0", "b0"}, where);
    return Family(PoissonGamma{get_real(j, "a0", where), get_real(j, "b0", where)});
  }
  throw ConfigError(where + ": unknown kind \"" + kind + "\"");
}

KPrior parse_k_prior(const json& j) {
  const std::string where = "prior.k";
  const std::string kind = get_kind(j, where);
  if (kind == "geometric") {
    check_keys(j, {"kind", "p"}, where);
    return KPrior(GeometricK{get_real(j, "p", where)});
  }
  if (kind == "shifted_poisson") {
    check_keys(j, {"kind", "mu"}, where);
    return KPrior(ShiftedPoissonK{get_real(j, "mu", where)});
  }
  if (kind == "bounded_uniform") {
    check_keys(j, {"kind", "max"}, where);
    return KPrior(BoundedUniformK{static_cast<std::size_t>(get_uint(j, "max", where))});
  }
  throw ConfigError(where + ": unknown kind \"" + kind + "\"");
}

WeightsPrior parse_weights_prior(const json& j) {
  const std::string where = "prior.weights";
  const std::string kind = get_kind(j, where);
  if (kind == "dirichlet") {
    check_keys(j, {"kind", "alpha", "alpha_by_k"}, where);
    DirichletWeights d{get_real(j, "alpha", where, 1.0), {}};
    if (j.contains("alpha_by_k")) {
      const auto& rows = j.at("alpha_by_k");
      if (!rows.is_array()) throw ConfigError(where + ".alpha_by_k: expected an array");
      for (const auto& row : rows) d.alpha_by_k.push_back(get_real_array(row, where + ".alpha_by_k"));
    }
    return WeightsPrior(std::move(d));
  }
  if (kind == "generalized_dirichlet") {
    check_keys(j, {"kind", "a", "b"}, where);
    return WeightsPrior(GeneralizedDirichletWeights{get_real(j, "a", where), get_real(j, "b", where)});
  }
  throw ConfigError(where + ": unknown kind \"" + kind + "\"");
}

ParamsPrior parse_params_prior(const json& j) {
  const std::string where = "prior.params";
  const std::string kind = get_kind(j, where);
  if (kind == "iid") {
    check_keys(j, {"kind"}, where);
    return ParamsPrior(IidParams{});
  }
  if (kind == "repulsive") {
    check_keys(j, {"kind", "tau", "mode"}, where);
    RepulsiveParams r{get_real(j, "tau", where), RepulsionMode::min};
    if (j.contains("mode")) {
      const auto mode = j.at("mode").get<std::string>();
      if (mode == "min") {
        r.mode = RepulsionMode::min;
      } else if (mode == "product") {
        r.mode = RepulsionMode::product;
      } else {
        throw ConfigError(where + ".mode: expected \"min\" or \"product\"");
      }
    }
    return ParamsPrior(r);
  }
  if (kind == "atom") {
    check_keys(j, {"kind", "location", "weight"}, where);
    return ParamsPrior(AtomParams{get_real_array(require(j, "location", where), where + ".location"),
                                  get_real(j, "weight", where, 0.5)});
  }
  throw ConfigError(where + ": unknown kind \"" + kind + "\"");
}

MixtureParams parse_theta0(const json& doc, const PriorSpec& prior, std::uint64_t master) {
  const std::string where = "theta0";
  const json j = doc.contains("theta0") ? doc.at("theta0") : json{{"draw_from_prior", true}};
  if (j.contains("draw_from_prior")) {
    check_keys(j, {"draw_from_prior", "seed"}, where);
    if (!get_bool(j, "draw_from_prior", where, false)) {
      throw ConfigError(where + ": draw_from_prior must be true when present");
    }
    Rng rng(get_uint(j, "seed", where, derive_seed(master, 2)));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      MixtureParams theta = sample_theta_prior(prior, rng);
      if (has_distinct_rows(theta)) return collapse(theta);
    }
    throw ConfigError(where + ": prior draws keep producing tied component parameters");
  }
  check_keys(j, {"w", "v"}, where);
  auto w = get_real_array(require(j, "w", where), where + ".w");
  const auto& rows = require(j, "v", where);
  if (!rows.is_array() || rows.size() != w.size()) {
    throw ConfigError(where + ".v: expected one row per weight");
  }
  std::vector<double> v;
  for (const auto& row : rows) {
    const auto r = get_real_array(row, where + ".v");
    if (r.size() != prior.family.param_dim()) {
      throw ConfigError(where + ".v: row length differs from the family parameter dimension");
    }
    v.insert(v.end(), r.begin(), r.end());
  }
  try {
    MixtureParams theta = MixtureParams::normalized(std::move(w), std::move(v),
                                                    prior.family.param_dim());
    if (const auto report = validate(theta, prior.family); !report) {
      throw ConfigError(where + ": " + report.violation);
    }
    if (!has_distinct_rows(theta)) throw ConfigError(where + ": component parameters must be distinct");
    return collapse(theta);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

McmcOptions McmcEngineConfig::options() const {
  McmcOptions o = McmcOptions::with_defaults(iters);
  if (burn_in) o.burn_in = *burn_in;
  o.thin = thin;
  o.dimension_moves_per_sweep = dimension_moves;
  return o;
}

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc,
             {"family", "prior", "theta0", "n_schedule", "epsilons", "replicates", "engine",
              "exact", "mcmc", "master_seed", "k_max", "conditions", "validate",
              "record_walltime", "threads"},
             "config");
  try {
    const Family family = parse_family(require(doc, "family", "config"));
    const json& pj = require(doc, "prior", "config");
    check_keys(pj, {"k", "weights", "params"}, "prior");
    PriorSpec prior{parse_k_prior(require(pj, "k", "prior")),
                    parse_weights_prior(require(pj, "weights", "prior")),
                    parse_params_prior(require(pj, "params", "prior")), family};

    const std::uint64_t master = get_uint(doc, "master_seed", "config", 0);
    MixtureParams theta0 = parse_theta0(doc, prior, master);

    std::vector<std::size_t> schedule{100};
    if (doc.contains("n_schedule")) {
      schedule.clear();
      for (double x : get_real_array(doc.at("n_schedule"), "n_schedule")) {
        if (!(x >= 0.0) || std::floor(x) != x) {
          throw ConfigError("n_schedule: entries must be non-negative integers");
        }
        schedule.push_back(static_cast<std::size_t>(x));
      }
      if (schedule.empty()) throw ConfigError("n_schedule: must be non-empty");
      for (std::size_t i = 1; i < schedule.size(); ++i) {
        if (schedule[i] <= schedule[i - 1]) throw ConfigError("n_schedule: must be strictly increasing");
      }
    }
    std::vector<double> eps{0.5, 1.0};
    if (doc.contains("epsilons")) eps = get_real_array(doc.at("epsilons"), "epsilons");
    for (double e : eps) {
      if (!(e > 0.0 && e <= 1.0)) throw ConfigError("epsilons: entries must lie in (0, 1]");
    }
    std::sort(eps.begin(), eps.end());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());

    const std::size_t replicates = get_uint(doc, "replicates", "config", 1);
    if (replicates < 1) throw ConfigError("replicates: must be >= 1");

    EngineKind engine = EngineKind::mcmc;
    if (doc.contains("engine")) {
      const auto e = doc.at("engine");
      if (e == "exact") {
        engine = EngineKind::exact;
      } else if (e == "mcmc") {
        engine = EngineKind::mcmc;
      } else {
        throw ConfigError("engine: expected \"exact\" or \"mcmc\"");
      }
    }
    ExactEngineConfig exact;
    if (doc.contains("exact")) {
      const auto& j = doc.at("exact");
      check_keys(j, {"draws", "max_states"}, "exact");
      exact.draws = get_uint(j, "draws", "exact", exact.draws);
      exact.max_states = get_uint(j, "max_states", "exact", exact.max_states);
      if (exact.draws < 1) throw ConfigError("exact.draws: must be >= 1");
    }
    McmcEngineConfig mcmc;
    if (doc.contains("mcmc")) {
      const auto& j = doc.at("mcmc");
      check_keys(j, {"iters", "burn_in", "thin", "dimension_moves"}, "mcmc");
      mcmc.iters = get_uint(j, "iters", "mcmc", mcmc.iters);
      if (j.contains("burn_in")) mcmc.burn_in = get_uint(j, "burn_in", "mcmc");
      mcmc.thin = get_uint(j, "thin", "mcmc", mcmc.thin);
      mcmc.dimension_moves = get_uint(j, "dimension_moves", "mcmc", mcmc.dimension_moves);
      if (mcmc.thin < 1) throw ConfigError("mcmc.thin: must be >= 1");
      if (mcmc.options().burn_in >= mcmc.iters) throw ConfigError("mcmc.burn_in: must be < iters");
    }
    const std::size_t k_max = get_uint(doc, "k_max", "config", 6);
    if (k_max < 2) throw ConfigError("k_max: must be >= 2");

    ConditionBudget budget;
    if (doc.contains("conditions")) {
      const auto& j = doc.at("conditions");
      check_keys(j,
                 {"k_probe_max", "density_probes", "distinct_draws", "identifiability_pairs",
                  "probe_points", "box_halfwidth"},
                 "conditions");
      budget.k_probe_max = get_uint(j, "k_probe_max", "conditions", budget.k_probe_max);
      budget.density_probes = get_uint(j, "density_probes", "conditions", budget.density_probes);
      budget.distinct_draws = get_uint(j, "distinct_draws", "conditions", budget.distinct_draws);
      budget.identifiability_pairs =
          get_uint(j, "identifiability_pairs", "conditions", budget.identifiability_pairs);
      budget.probe_points = get_uint(j, "probe_points", "conditions", budget.probe_points);
      budget.box_halfwidth = get_real(j, "box_halfwidth", "conditions", budget.box_halfwidth);
      if (!(budget.box_halfwidth > 0.0)) throw ConfigError("conditions.box_halfwidth: must be > 0");
    }
    ValidateConfig val;
    if (doc.contains("validate")) {
      const auto& j = doc.at("validate");
      check_keys(j, {"n", "k_max", "sweeps", "tolerance"}, "validate");
      val.n = get_uint(j, "n", "validate", val.n);
      val.k_max = get_uint(j, "k_max", "validate", val.k_max);
      val.sweeps = get_uint(j, "sweeps", "validate", val.sweeps);
      val.tolerance = get_real(j, "tolerance", "validate", val.tolerance);
      if (val.k_max < 2) throw ConfigError("validate.k_max: must be >= 2");
      if (val.sweeps < 10) throw ConfigError("validate.sweeps: must be >= 10");
    }

    return ExperimentConfig{std::move(prior),
                            std::move(theta0),
                            std::move(schedule),
                            std::move(eps),
                            replicates,
                            engine,
                            exact,
                            mcmc,
                            master,
                            k_max,
                            budget,
                            val,
                            get_bool(doc, "record_walltime", "config", false),
                            static_cast<std::size_t>(get_uint(doc, "threads", "config", 0))};
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_config(doc);
}

std::string_view to_string(EngineKind e) { return e == EngineKind::exact ? "exact" : "mcmc"; }

std::uint64_t replicate_data_seed(std::uint64_t master, std::size_t replicate) {
  return derive_seed(master, 0, replicate);
}

std::uint64_t engine_seed(std::uint64_t master, std::size_t replicate, std::size_t schedule_index) {
  return derive_seed(master, 1, replicate, schedule_index);
}

ConsistencyRecord evaluate_dataset(const ExperimentConfig& config, const Dataset& data,
                                   std::uint64_t seed) {
  ConsistencyRecord rec;
  rec.n = data.size();
  rec.k0 = config.theta0.k();
  rec.engine = config.engine;
  rec.trunc_bound = config.prior.k_prior.tail_mass(config.k_max);
  const auto start = std::chrono::steady_clock::now();
  try {
    Rng rng(seed);
    ThetaDraws draws;
    if (config.engine == EngineKind::exact) {
      draws = exact_theta_draws(data, config.prior, config.k_max, config.exact.draws, rng,
                                DrawScheme::stratified_by_k, config.exact.max_states);
    } else {
      draws = mcmc_run(data, config.prior, config.k_max, config.mcmc.options(), rng).draws;
    }
    draws.seed = seed;
    const KPosterior kpost = estimate_k_posterior(draws, rec.trunc_bound);
    rec.pr_k = kpost.prob(rec.k0);
    rec.pr_k_se = kpost.mc_standard_errors.count(rec.k0) ? kpost.mc_standard_errors.at(rec.k0) : 0.0;
    for (double eps : config.epsilons) {
      const auto est = estimate_neighborhood_prob(draws, NeighborhoodSpec(config.theta0, eps));
      rec.per_eps.push_back({eps, est.value, est.standard_error});
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.per_eps.clear();
  }
  rec.walltime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<ConsistencyRecord> run_consistency_curve(const ExperimentConfig& config) {
  const std::size_t reps = config.replicates;
  const std::size_t n_max = config.n_schedule.back();
  std::vector<std::vector<ConsistencyRecord>> per_rep(reps);

  auto work = [&](std::size_t r) {
    const std::uint64_t data_seed = replicate_data_seed(config.master_seed, r);
    Rng data_rng(data_seed);
    const SimulatedData sim = sample_mixture(config.prior.family, config.theta0, n_max, data_rng);
    for (std::size_t i = 0; i < config.n_schedule.size(); ++i) {
      const std::size_t n = config.n_schedule[i];
      ConsistencyRecord rec =
          evaluate_dataset(config, sim.data.prefix(n), engine_seed(config.master_seed, r, i));
      rec.replicate = r;
      rec.seed = data_seed;
      per_rep[r].push_back(std::move(rec));
    }
  };

  std::size_t threads = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, reps);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < reps; r = next++) work(r);
      });
    }
  }

  std::vector<ConsistencyRecord> out;
  for (auto& rows : per_rep) {
    for (auto& rec : rows) out.push_back(std::move(rec));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.n != b.n ? a.n < b.n : a.replicate < b.replicate;
  });
  return out;
}

namespace {

std::string fmt_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

// Enough digits to read back the same double.
std::string fmt_exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void write_consistency_csv(const std::vector<ConsistencyRecord>& records, bool record_walltime,
                           std::ostream& out) {
  out << "n,replicate,seed,k0,pr_k,pr_k_se,eps,pr_nbhd,pr_nbhd_se,trunc_bound,engine,walltime_ms,"
         "error\n";
  for (const auto& rec : records) {
    const std::string wall = record_walltime ? fmt_real(std::round(rec.walltime_ms)) : "";
    const std::string head = std::to_string(rec.n) + "," + std::to_string(rec.replicate) + "," +
                             std::to_string(rec.seed) + "," + std::to_string(rec.k0) + ",";
    const std::string tail_common = "," + fmt_real(rec.trunc_bound) + "," +
                                    std::string(to_string(rec.engine)) + "," + wall + ",";
    if (!rec.error.empty()) {
      out << head << ",,,," << tail_common << csv_field(rec.error) << "\n";
      continue;
    }
    // Rows per eps are written in the order stored, which parse_config sorts.
    for (const auto& e : rec.per_eps) {
      out << head << fmt_real(rec.pr_k) << "," << fmt_real(rec.pr_k_se) << "," << fmt_real(e.eps)
          << "," << fmt_real(e.pr_nbhd) << "," << fmt_real(e.pr_nbhd_se) << tail_common << "\n";
    }
  }
}

void write_dataset_csv(const SimulatedData& sim, std::ostream& out) {
  out << "i,label";
  for (std::size_t d = 0; d < sim.data.dim; ++d) out << ",x" << d + 1;
  out << "\n";
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    out << i << "," << (i < sim.labels.size() ? std::to_string(sim.labels[i]) : "");
    for (double x : sim.data.point(i)) out << "," << fmt_exact(x);
    out << "\n";
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("data file: missing header");
  std::vector<std::size_t> x_cols;
  {
    std::istringstream hs(line);
    std::string cell;
    for (std::size_t c = 0; std::getline(hs, cell, ','); ++c) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      if (cell.size() > 1 && cell[0] == 'x') x_cols.push_back(c);
    }
  }
  if (x_cols.empty()) throw std::invalid_argument("data file: no x1..xm columns in header");
  Dataset data;
  data.dim = x_cols.size();
  for (std::size_t row = 1; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    for (std::size_t c : x_cols) {
      if (c >= cells.size()) throw std::invalid_argument("data file: short row " + std::to_string(row));
      try {
        data.values.push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw std::invalid_argument("data file: bad number in row " + std::to_string(row));
      }
    }
  }
  return data;
}

}  // namespace fmm
