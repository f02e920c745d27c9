#ifndef MMEIG_HARNESS_HPP
#define MMEIG_HARNESS_HPP

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "benchmarks.hpp"
#include "core.hpp"
#include "estimators.hpp"
#include "random.hpp"

namespace mmeig {

inline const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names{"dlmc", "la", "lais", "mla", "mnis", "mnis-uncalibrated"};
  return names;
}

inline std::string join_names(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

//! Everything one harness invocation needs; loaded from JSON, then flags override.
struct RunConfig {
  // model
  std::string model = "quadratic";
  double xi = 1.0;
  std::optional<double> sigma2;
  std::optional<SensorNetworkSpec> sensor;  // replaces the sensor preset when set
  std::optional<Matrix> linear_a;
  std::optional<Vector> linear_prior_variance;
  // noise
  std::string noise = "calibrated";
  double sigma_lower = 2.0;
  double sigma_upper = 4.0;
  int sigma_samples = 100;
  // estimator
  std::string estimator = "mnis";
  long long outer = 1000;
  long long inner = 100;
  int mode_runs = 20;
  std::string optimizer = "quasi-newton-fd";
  int replicates = 1;
  double tol = 0.1;
  double gamma = 0.5;
  // run
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  bool timing = true;
  // studies
  std::string axis = "inner_samples";
  std::vector<long long> grid;
  int repeats = 1;
  std::vector<double> xi_grid;
  std::vector<std::string> estimators;
  std::vector<std::string> noise_modes;
  std::vector<int> subset_sizes;
  long long exhaustive_limit = 100;
  long long max_evaluations = -1;
  std::string resume_token;

  void validate() const {
    const auto models = model_names();
    if (std::find(models.begin(), models.end(), model) == models.end())
      throw ConfigError("model: unknown model '" + model + "' (valid: " + join_names(models) + ")");
    if (!std::isfinite(xi)) throw ConfigError("model.xi: must be finite");
    if (sigma2 && !(*sigma2 > 0.0)) throw ConfigError("model.sigma2: must be > 0");
    if (noise != "calibrated" && noise != "uncalibrated")
      throw ConfigError("noise.mode: must be 'calibrated' or 'uncalibrated', got '" + noise + "'");
    if (!(sigma_lower > 0.0) || !(sigma_upper >= sigma_lower))
      throw ConfigError("noise.sigma_lower/sigma_upper: need 0 < lower <= upper");
    if (sigma_samples < 1) throw ConfigError("noise.samples: must be >= 1");
    const auto& names = estimator_names();
    if (std::find(names.begin(), names.end(), estimator) == names.end())
      throw ConfigError("estimator.name: unknown estimator '" + estimator + "' (valid: " + join_names(names) + ")");
    if (estimator == "mnis-uncalibrated" && noise != "uncalibrated")
      throw ConfigError("estimator.name: 'mnis-uncalibrated' needs noise.mode = uncalibrated");
    for (const auto& e : estimators)
      if (std::find(names.begin(), names.end(), e) == names.end())
        throw ConfigError("study.estimators: unknown estimator '" + e + "' (valid: " + join_names(names) + ")");
    for (const auto& n : noise_modes)
      if (n != "calibrated" && n != "uncalibrated")
        throw ConfigError("study.noise_modes: unknown noise mode '" + n + "'");
    if (outer < 1) throw ConfigError("estimator.outer: must be >= 1");
    if (inner < 1) throw ConfigError("estimator.inner: must be >= 1");
    if (mode_runs < 1) throw ConfigError("estimator.mode_runs: must be >= 1");
    try {
      parse_optimizer(optimizer);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("estimator.optimizer: ") + e.what());
    }
    if (replicates < 1) throw ConfigError("estimator.replicates: must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("estimator.tol: must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("estimator.gamma: must be in (0, 1)");
    if (workers < 1) throw ConfigError("run.workers: must be >= 1");
    if (axis != "inner_samples" && axis != "outer_samples" && axis != "mode_runs")
      throw ConfigError("study.axis: must be inner_samples, outer_samples or mode_runs");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < 1) throw ConfigError("study.grid: counts must be >= 1");
      if (i > 0 && grid[i] <= grid[i - 1]) throw ConfigError("study.grid: must be strictly ascending");
    }
    if (repeats < 1) throw ConfigError("study.repeats: must be >= 1");
    for (double x : xi_grid)
      if (!std::isfinite(x)) throw ConfigError("study.xi_grid: values must be finite");
    for (int d : subset_sizes)
      if (d < 1) throw ConfigError("study.subset_sizes: sizes must be >= 1");
    if (exhaustive_limit < 1) throw ConfigError("study.exhaustive_limit: must be >= 1");
    if (sensor) {
      try {
        sensor->validate();
      } catch (const DomainError& e) {
        throw ConfigError(std::string("model.sensor: ") + e.what());
      }
    }
    if (!resume_token.empty()) {
      try {
        detail::ResumeToken::decode(resume_token);
      } catch (const DomainError& e) {
        throw ConfigError(std::string("study.resume_token: ") + e.what());
      }
    }
    if (linear_prior_variance && !(linear_prior_variance->array() > 0.0).all())
      throw ConfigError("model.linear.prior_variance: entries must be > 0");
    if (linear_a && linear_prior_variance && linear_a->cols() != linear_prior_variance->size())
      throw ConfigError("model.linear: A columns must match prior_variance length");
  }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError((path.empty() ? "" : path + ".") + key + ": unknown key");
  }
}

template <typename T>
void read(const json& j, const char* key, const std::string& path, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

inline Prior parse_prior(const json& j, int dim, const std::string& path) {
  check_keys(j, path, {"kind", "lower", "upper", "mean", "variance"});
  std::string kind = "uniform";
  read(j, "kind", path, kind);
  if (kind == "uniform") {
    double lo = 0.0, hi = 1.0;
    read(j, "lower", path, lo);
    read(j, "upper", path, hi);
    if (!(hi > lo)) throw ConfigError(path + ": need lower < upper");
    return Prior::uniform(dim, lo, hi);
  }
  if (kind == "gaussian") {
    double m = 0.0, v = 1.0;
    read(j, "mean", path, m);
    read(j, "variance", path, v);
    if (!(v > 0.0)) throw ConfigError(path + ".variance: must be > 0");
    return Prior::gaussian(dim, m, v);
  }
  throw ConfigError(path + ".kind: must be uniform or gaussian");
}

inline SensorPair parse_pair(const json& p, const std::string& path) {
  if (!p.is_array() || p.size() != 2) throw ConfigError(path + ": pairs are [i, j] arrays");
  return {p[0].get<int>(), p[1].get<int>()};
}

inline SensorNetworkSpec parse_sensor(const json& j, const std::string& path) {
  check_keys(j, path, {"name", "n_sensors", "fixed", "unknown", "prior", "pairs", "measured", "sigma2"});
  SensorNetworkSpec s;
  s.name = "sensor-custom";
  read(j, "name", path, s.name);
  read(j, "n_sensors", path, s.n_sensors);
  read(j, "unknown", path, s.unknown_sensors);
  read(j, "sigma2", path, s.sigma2);
  if (j.contains("fixed")) {
    const auto& f = j.at("fixed");
    if (!f.is_object()) throw ConfigError(path + ".fixed: expected an object id -> [x, z]");
    for (const auto& [id, pos] : f.items()) {
      if (!pos.is_array() || pos.size() != 2) throw ConfigError(path + ".fixed." + id + ": expected [x, z]");
      s.fixed_positions[std::stoi(id)] = {pos[0].get<double>(), pos[1].get<double>()};
    }
  }
  s.prior = j.contains("prior") ? parse_prior(j.at("prior"), s.param_dim(), path + ".prior")
                                : Prior::uniform(s.param_dim(), 0.0, 1.0);
  if (j.contains("pairs")) {
    for (const auto& p : j.at("pairs")) s.pairs.push_back(parse_pair(p, path + ".pairs"));
  } else {
    s.pairs = all_pairs(s.n_sensors);
  }
  std::vector<SensorPair> measured;
  if (j.contains("measured"))
    for (const auto& p : j.at("measured")) measured.push_back(parse_pair(p, path + ".measured"));
  try {
    s.measured = pair_indices(s.pairs, measured);
  } catch (const DomainError& e) {
    throw ConfigError(path + ".measured: " + e.what());
  }
  return s;
}

}  // namespace detail

/*!
 * Apply a JSON document to `cfg`. Layout:
 *   {"model": {...}, "noise": {...}, "estimator": {...}, "run": {...}, "study": {...}}
 * Unknown keys at any level are rejected.
 */
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  using detail::read;
  detail::check_keys(j, "", {"model", "noise", "estimator", "run", "study"});
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, "model", {"name", "xi", "sigma2", "sensor", "linear"});
    read(m, "name", "model", cfg.model);
    read(m, "xi", "model", cfg.xi);
    if (m.contains("sigma2")) {
      double s2 = 0.0;
      read(m, "sigma2", "model", s2);
      cfg.sigma2 = s2;
    }
    if (m.contains("sensor")) cfg.sensor = detail::parse_sensor(m.at("sensor"), "model.sensor");
    if (m.contains("linear")) {
      const auto& l = m.at("linear");
      detail::check_keys(l, "model.linear", {"A", "prior_variance"});
      if (l.contains("A")) {
        std::vector<std::vector<double>> rows;
        read(l, "A", "model.linear", rows);
        if (rows.empty() || rows.front().empty()) throw ConfigError("model.linear.A: empty matrix");
        Matrix a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.front().size()) throw ConfigError("model.linear.A: ragged rows");
          for (std::size_t c = 0; c < rows[r].size(); ++c)
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        cfg.linear_a = a;
      }
      if (l.contains("prior_variance")) {
        std::vector<double> v;
        read(l, "prior_variance", "model.linear", v);
        cfg.linear_prior_variance = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
    }
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::check_keys(n, "noise", {"mode", "sigma_lower", "sigma_upper", "samples"});
    read(n, "mode", "noise", cfg.noise);
    read(n, "sigma_lower", "noise", cfg.sigma_lower);
    read(n, "sigma_upper", "noise", cfg.sigma_upper);
    read(n, "samples", "noise", cfg.sigma_samples);
  }
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    detail::check_keys(e, "estimator",
                       {"name", "outer", "inner", "mode_runs", "optimizer", "replicates", "tol", "gamma"});
    read(e, "name", "estimator", cfg.estimator);
    read(e, "outer", "estimator", cfg.outer);
    read(e, "inner", "estimator", cfg.inner);
    read(e, "mode_runs", "estimator", cfg.mode_runs);
    read(e, "optimizer", "estimator", cfg.optimizer);
    read(e, "replicates", "estimator", cfg.replicates);
    read(e, "tol", "estimator", cfg.tol);
    read(e, "gamma", "estimator", cfg.gamma);
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    detail::check_keys(r, "run", {"seed", "workers", "out", "timing"});
    read(r, "seed", "run", cfg.seed);
    read(r, "workers", "run", cfg.workers);
    read(r, "out", "run", cfg.out);
    read(r, "timing", "run", cfg.timing);
  }
  if (j.contains("study")) {
    const auto& s = j.at("study");
    detail::check_keys(s, "study",
                       {"axis", "grid", "repeats", "xi_grid", "estimators", "noise_modes", "subset_sizes",
                        "exhaustive_limit", "max_evaluations", "resume_token"});
    read(s, "axis", "study", cfg.axis);
    read(s, "grid", "study", cfg.grid);
    read(s, "repeats", "study", cfg.repeats);
    read(s, "xi_grid", "study", cfg.xi_grid);
    read(s, "estimators", "study", cfg.estimators);
    read(s, "noise_modes", "study", cfg.noise_modes);
    read(s, "subset_sizes", "study", cfg.subset_sizes);
    read(s, "exhaustive_limit", "study", cfg.exhaustive_limit);
    read(s, "max_evaluations", "study", cfg.max_evaluations);
    read(s, "resume_token", "study", cfg.resume_token);
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  RunConfig cfg;
  try {
    apply_config_json(cfg, j);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: " + path + ": malformed value (" + e.what() + ")");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Building experiments

inline SearchConfig search_config(const RunConfig& cfg) {
  SearchConfig s;
  s.n = cfg.mode_runs;
  s.optimizer = parse_optimizer(cfg.optimizer);
  return s;
}

//! Model bundle for the configured model at design `xi`, with the configured noise.
inline ModelBundle build_bundle(const RunConfig& cfg, double xi) {
  std::optional<ModelBundle> b;
  if ((cfg.model == "sensor4" || cfg.model == "sensor6") && cfg.sensor) {
    auto spec = *cfg.sensor;
    if (cfg.sigma2) spec.sigma2 = *cfg.sigma2;
    b.emplace(make_sensor_model(spec).bundle);
  } else if (cfg.model == "linear-gaussian") {
    const Matrix a = cfg.linear_a.value_or(Matrix::Identity(2, 2));
    const Vector v = cfg.linear_prior_variance.value_or(Vector::Ones(a.cols()));
    b.emplace(make_linear_gaussian_model(a, v, cfg.sigma2.value_or(1.0), cfg.replicates));
  } else {
    b.emplace(make_preset(cfg.model, xi, cfg.sigma2));
  }
  if (cfg.noise == "uncalibrated")
    b->noise = NoiseModel::uncalibrated(cfg.sigma_lower, cfg.sigma_upper, cfg.sigma_samples);
  return std::move(*b);
}

inline std::string design_descriptor(const RunConfig& cfg, const ModelBundle& b) {
  char buf[64];
  if (b.design.size() == 1) {
    std::snprintf(buf, sizeof buf, "xi=%.6g", b.design[0]);
    return buf;
  }
  if (cfg.model == "sensor4" || cfg.model == "sensor6") {
    const auto spec = cfg.sensor ? *cfg.sensor : (cfg.model == "sensor4" ? sensor4_spec() : sensor6_spec());
    std::string s = "pairs=";
    const auto pairs = spec.measured_pairs();
    for (std::size_t i = 0; i < pairs.size(); ++i)
      s += (i ? "|" : "") + std::to_string(pairs[i].first) + "-" + std::to_string(pairs[i].second);
    return s;
  }
  return "-";
}

//! Dispatch by estimator name with explicit counts.
inline EigEstimate run_named_estimator(const std::string& name, const ExperimentSpec& spec, long long M,
                                       long long N, const SearchConfig& search) {
  if (name == "dlmc") return eig_dlmc(spec, M, N);
  if (name == "la") return eig_la(spec, M, search);
  if (name == "mla") return eig_mla(spec, M, search);
  if (name == "lais") {
    SearchConfig single = search;
    single.n = 1;
    return eig_lais(spec, M, N, single);
  }
  if (name == "mnis") return spec.noise.is_calibrated()
                                 ? eig_mnis(spec, M, N, search)
                                 : eig_mnis_uncalibrated(spec, M, N, spec.noise.marginal_samples(), search);
  if (name == "mnis-uncalibrated")
    return eig_mnis_uncalibrated(spec, M, N, spec.noise.marginal_samples(), search);
  throw ConfigError("unknown estimator '" + name + "' (valid: " + join_names(estimator_names()) + ")");
}

// ---------------------------------------------------------------------------
// Result rows

struct ResultRow {
  long long run_id = 0;
  std::string estimator;
  std::string model;
  std::string design;
  long long M = 0;
  long long N = 0;
  long long n = 0;
  double eig = 0.0;
  double std_error = 0.0;
  long long likelihood_evals = 0;
  long long optimizer_runs = 0;
  double wall_time_s = 0.0;
  long long underflow_count = 0;
  long long skipped_samples = 0;
};

inline const char* csv_header() {
  return "run_id,estimator,model,design,M,N,n,eig,std_error,likelihood_evals,optimizer_runs,"
         "wall_time_s,underflow_count,skipped_samples";
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string to_csv(const ResultRow& r) {
  std::string s;
  s += std::to_string(r.run_id) + "," + r.estimator + "," + r.model + "," + r.design + ",";
  s += std::to_string(r.M) + "," + std::to_string(r.N) + "," + std::to_string(r.n) + ",";
  s += format_real(r.eig) + "," + format_real(r.std_error) + ",";
  s += std::to_string(r.likelihood_evals) + "," + std::to_string(r.optimizer_runs) + ",";
  s += format_real(r.wall_time_s) + "," + std::to_string(r.underflow_count) + "," +
       std::to_string(r.skipped_samples);
  return s;
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << csv_header() << '\n';
  for (const auto& r : rows) os << to_csv(r) << '\n';
}

//! Write to cfg.out, or to `fallback` when no path is configured.
inline void emit_csv(const RunConfig& cfg, const std::vector<ResultRow>& rows, std::ostream& fallback) {
  if (cfg.out.empty()) {
    write_csv(fallback, rows);
    return;
  }
  std::ofstream f(cfg.out);
  if (!f) throw ConfigError("run.out: cannot write '" + cfg.out + "'");
  write_csv(f, rows);
}

inline ResultRow make_row(long long id, const std::string& model, const std::string& design,
                          const EigEstimate& e, long long n, double seconds) {
  ResultRow r;
  r.run_id = id;
  r.estimator = e.estimator;
  r.model = model;
  r.design = design;
  r.M = e.outer_samples;
  r.N = e.inner_samples;
  r.n = n;
  r.eig = e.value;
  r.std_error = e.std_error;
  r.likelihood_evals = e.likelihood_evals;
  r.optimizer_runs = e.optimizer_runs;
  r.wall_time_s = seconds;
  r.underflow_count = e.underflow_count;
  r.skipped_samples = e.skipped_samples;
  return r;
}

namespace detail {

inline long long mode_runs_of(const std::string& estimator, int n) {
  if (estimator == "dlmc") return 0;
  if (estimator == "la" || estimator == "lais") return 1;
  return n;
}

inline long long inner_of(const std::string& estimator, long long N) {
  return estimator == "la" || estimator == "mla" ? 0 : N;
}

//! Seed of repeat r: repeat 0 keeps the configured seed.
inline std::uint64_t repeat_seed(std::uint64_t seed, int r) {
  return r == 0 ? seed : splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(r)));
}

}  // namespace detail

struct EstimateOutcome {
  ResultRow row;
  EigEstimate estimate;
};

/*!
 * One estimator run. Deterministic in (cfg, seed) for any worker count;
 * wall_time_s is 0 when timing is disabled.
 */
inline EstimateOutcome run_estimate_full(const RunConfig& cfg, long long run_id = 0) {
  cfg.validate();
  const auto bundle = build_bundle(cfg, cfg.xi);
  const auto spec = bundle.experiment(cfg.replicates, cfg.seed, cfg.workers);
  const auto t0 = std::chrono::steady_clock::now();
  auto est = run_named_estimator(cfg.estimator, spec, cfg.outer, cfg.inner, search_config(cfg));
  const double secs =
      cfg.timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
  auto row = make_row(run_id, cfg.model, design_descriptor(cfg, bundle), est,
                      detail::mode_runs_of(cfg.estimator, cfg.mode_runs), secs);
  return {std::move(row), std::move(est)};
}

inline ResultRow run_estimate(const RunConfig& cfg) { return run_estimate_full(cfg).row; }

/*!
 * One row per (grid point, repeat) along `cfg.axis`, which sets the inner
 * count N, the outer count M or the number of mode-search runs n.
 */
inline std::vector<ResultRow> convergence_study(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.grid.empty()) throw ConfigError("study.grid: must not be empty");
  std::vector<ResultRow> rows;
  long long id = 0;
  for (long long g : cfg.grid) {
    for (int r = 0; r < cfg.repeats; ++r) {
      RunConfig c = cfg;
      if (cfg.axis == "inner_samples") c.inner = g;
      if (cfg.axis == "outer_samples") c.outer = g;
      if (cfg.axis == "mode_runs") c.mode_runs = static_cast<int>(g);
      c.seed = detail::repeat_seed(cfg.seed, r);
      rows.push_back(run_estimate_full(c, id++).row);
    }
  }
  return rows;
}

/*!
 * EIG over a grid of scalar designs, for each requested estimator and noise
 * mode. Noise modes default to the configured one.
 */
inline std::vector<ResultRow> design_sweep(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.xi_grid.empty()) throw ConfigError("study.xi_grid: must not be empty");
  const auto estimators = cfg.estimators.empty() ? std::vector<std::string>{cfg.estimator} : cfg.estimators;
  const auto modes = cfg.noise_modes.empty() ? std::vector<std::string>{cfg.noise} : cfg.noise_modes;
  std::vector<ResultRow> rows;
  long long id = 0;
  for (double xi : cfg.xi_grid) {
    for (const auto& mode : modes) {
      for (const auto& e : estimators) {
        RunConfig c = cfg;
        c.xi = xi;
        c.noise = mode;
        c.estimator = e;
        if (e == "mnis-uncalibrated" && mode == "calibrated") continue;
        auto row = run_estimate_full(c, id++).row;
        if (mode == "uncalibrated" && row.estimator.find("uncalibrated") == std::string::npos)
          row.estimator += "-uncalibrated";
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

inline SensorNetworkSpec sensor_spec_of(const RunConfig& cfg) {
  if (cfg.sensor) return *cfg.sensor;
  if (cfg.model == "sensor4") return sensor4_spec();
  if (cfg.model == "sensor6") return sensor6_spec();
  throw ConfigError("model: subset search needs a sensor model (sensor4, sensor6)");
}

struct SubsetStudy {
  std::vector<ResultRow> rows;
  std::vector<SubsetSearchResult> results;
  std::string resume_token;  // non-empty when the evaluation budget ran out
};

/*!
 * Measurement-subset search on a sensor network for d_m = 1..max(subset_sizes),
 * greedy steps building on the previous best. Every evaluated candidate
 * becomes a row; rows of one d_m are ranked best first.
 */
inline SubsetStudy subset_study(const RunConfig& cfg) {
  cfg.validate();
  auto spec = sensor_spec_of(cfg);
  if (cfg.sigma2) spec.sigma2 = *cfg.sigma2;
  const int max_dm = cfg.subset_sizes.empty()
                         ? static_cast<int>(spec.pairs.size())
                         : *std::max_element(cfg.subset_sizes.begin(), cfg.subset_sizes.end());
  if (max_dm > static_cast<int>(spec.pairs.size()))
    throw ConfigError("study.subset_sizes: d_m exceeds the " + std::to_string(spec.pairs.size()) +
                      " candidate distances");
  const auto search = search_config(cfg);
  SubsetEvaluator eval = [&](const SensorNetworkSpec& s) {
    auto bundle = make_sensor_model(s).bundle;
    if (cfg.noise == "uncalibrated")
      bundle.noise = NoiseModel::uncalibrated(cfg.sigma_lower, cfg.sigma_upper, cfg.sigma_samples);
    return run_named_estimator(cfg.estimator, bundle.experiment(cfg.replicates, cfg.seed, cfg.workers),
                               cfg.outer, cfg.inner, search);
  };
  SubsetStudy out;
  SubsetSearchOptions opt;
  opt.exhaustive_limit = cfg.exhaustive_limit;
  std::vector<int> best;
  long long remaining = cfg.max_evaluations;
  int first_dm = 1;
  if (!cfg.resume_token.empty()) {
    const auto tok = detail::ResumeToken::decode(cfg.resume_token);
    first_dm = tok.d_m;
    best = tok.base;
  }
  long long id = 0;
  for (int d = first_dm; d <= max_dm; ++d) {
    opt.resume_token = d == first_dm ? cfg.resume_token : "";
    opt.max_evaluations = remaining;
    auto r = best_design_search(spec, d, eval, best, opt);
    if (remaining >= 0) remaining -= static_cast<long long>(r.candidates.size());
    for (const auto& c : r.candidates) {
      ResultRow row = make_row(id++, spec.name, "", c.eig, detail::mode_runs_of(cfg.estimator, cfg.mode_runs), 0.0);
      const auto sub = spec.with_measured(c.subset).measured_pairs();
      row.design = "pairs=";
      for (std::size_t i = 0; i < sub.size(); ++i)
        row.design += (i ? "|" : "") + std::to_string(sub[i].first) + "-" + std::to_string(sub[i].second);
      out.rows.push_back(std::move(row));
    }
    const bool complete = r.complete;
    best = r.best_subset;
    out.results.push_back(std::move(r));
    if (!complete) {
      out.resume_token = out.results.back().resume_token;
      break;
    }
  }
  return out;
}

}  // namespace mmeig

#endif  // MMEIG_HARNESS_HPP
