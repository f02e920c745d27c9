#ifndef MMEIG_TOOLS_CLI_HPP
#define MMEIG_TOOLS_CLI_HPP

#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmeig/harness.hpp"
#include "mmeig/validation.hpp"

namespace mmeig::cli {

enum ExitCode : int { kOk = 0, kValidationFailed = 1, kConfigError = 2, kRuntimeError = 3 };

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* field) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError(std::string(field) + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  return out;
}

inline void report_diagnostics(const EigEstimate& e, std::ostream& err) {
  err << "estimator=" << e.estimator << " eig=" << e.value << " std_error=" << e.std_error
      << " mean_modes=" << e.mean_modes << " C1^2=" << e.outer_variance << " C2=" << e.inner_c2
      << " skipped=" << e.skipped_samples << " underflow=" << e.underflow_count
      << " unstable=" << e.unstable_samples << " boundary_modes=" << e.boundary_modes << '\n';
}

/*!
 * Entry point of the mmeig command-line tool. CSV goes to --out or `out`;
 * diagnostics go to `err`. Returns the process exit code.
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expected information gain estimation for multimodal posteriors"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, model, estimator, noise, out_path, optimizer;
  long long outer = 0, inner = 0;
  int mode_runs = 0, sigma_samples = 0, workers = 0, replicates = 0;
  double xi = 0.0, sigma2 = 0.0;
  std::uint64_t seed = 0;
  bool no_timing = false;
  auto* o_config = app.add_option("--config", config_path, "JSON configuration file");
  auto* o_model = app.add_option("--model", model, "quadratic, sensor4, sensor6 or linear-gaussian");
  auto* o_est = app.add_option("--estimator", estimator, "dlmc, la, lais, mla, mnis, mnis-uncalibrated");
  auto* o_outer = app.add_option("--outer", outer, "outer samples M");
  auto* o_inner = app.add_option("--inner", inner, "inner samples N");
  auto* o_runs = app.add_option("--mode-runs", mode_runs, "optimization runs n per outer sample");
  auto* o_noise = app.add_option("--noise", noise, "calibrated or uncalibrated");
  auto* o_sig = app.add_option("--sigma-samples", sigma_samples, "marginalization samples L");
  auto* o_xi = app.add_option("--xi", xi, "scalar design (quadratic model)");
  auto* o_s2 = app.add_option("--sigma2", sigma2, "noise variance override");
  auto* o_opt = app.add_option("--optimizer", optimizer, "quasi-newton-fd or nelder-mead");
  auto* o_rep = app.add_option("--replicates", replicates, "replicates m per experiment");
  auto* o_seed = app.add_option("--seed", seed, "64-bit seed");
  auto* o_work = app.add_option("--workers", workers, "worker threads");
  auto* o_out = app.add_option("--out", out_path, "CSV output path (default: standard output)");
  app.add_flag("--no-timing", no_timing, "write wall_time_s = 0 so output is byte-reproducible");

  auto* estimate = app.add_subcommand("estimate", "run one estimator");
  auto* converge = app.add_subcommand("converge", "convergence study along one axis");
  std::string axis, grid;
  int repeats = 0;
  auto* o_axis = converge->add_option("--axis", axis, "inner_samples, outer_samples or mode_runs");
  auto* o_grid = converge->add_option("--grid", grid, "comma-separated ascending counts");
  auto* o_repeats = converge->add_option("--repeats", repeats, "repeats per grid point");
  auto* sweep = app.add_subcommand("sweep", "EIG over a grid of designs");
  std::string xi_grid, estimators, noise_modes;
  auto* o_xig = sweep->add_option("--xi-grid", xi_grid, "comma-separated designs");
  auto* o_ests = sweep->add_option("--estimators", estimators, "comma-separated estimator names");
  auto* o_nm = sweep->add_option("--noise-modes", noise_modes, "comma-separated: calibrated,uncalibrated");
  auto* subsets = app.add_subcommand("subsets", "measurement-subset search on a sensor network");
  std::string sizes, resume;
  long long max_evals = -1, exhaustive = 0;
  auto* o_sizes = subsets->add_option("--sizes", sizes, "subset sizes d_m (the sweep runs up to the largest)");
  auto* o_max = subsets->add_option("--max-evaluations", max_evals, "stop with a resume token after this many");
  auto* o_exh = subsets->add_option("--exhaustive-limit", exhaustive, "enumerate all subsets up to this count");
  auto* o_res = subsets->add_option("--resume", resume, "resume token from an interrupted search");
  auto* validate_cmd = app.add_subcommand("validate", "run the validation suite");
  std::string suite = "fast";
  int criterion = 0;
  validate_cmd->add_option("--suite", suite, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  validate_cmd->add_option("--criterion", criterion, "run a single acceptance criterion (1-8)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  RunConfig cfg;
  try {
    if (o_config->count()) cfg = load_config_file(config_path);
    if (o_model->count()) cfg.model = model;
    if (o_est->count()) cfg.estimator = estimator;
    if (o_outer->count()) cfg.outer = outer;
    if (o_inner->count()) cfg.inner = inner;
    if (o_runs->count()) cfg.mode_runs = mode_runs;
    if (o_noise->count()) cfg.noise = noise;
    if (o_sig->count()) cfg.sigma_samples = sigma_samples;
    if (o_xi->count()) cfg.xi = xi;
    if (o_s2->count()) cfg.sigma2 = sigma2;
    if (o_opt->count()) cfg.optimizer = optimizer;
    if (o_rep->count()) cfg.replicates = replicates;
    if (o_seed->count()) cfg.seed = seed;
    if (o_work->count()) cfg.workers = workers;
    if (o_out->count()) cfg.out = out_path;
    if (no_timing) cfg.timing = false;
    if (o_axis->count()) cfg.axis = axis;
    if (o_grid->count()) cfg.grid = parse_list<long long>(grid, "--grid");
    if (o_repeats->count()) cfg.repeats = repeats;
    if (o_xig->count()) cfg.xi_grid = parse_list<double>(xi_grid, "--xi-grid");
    if (o_ests->count()) cfg.estimators = parse_list<std::string>(estimators, "--estimators");
    if (o_nm->count()) cfg.noise_modes = parse_list<std::string>(noise_modes, "--noise-modes");
    if (o_sizes->count()) cfg.subset_sizes = parse_list<int>(sizes, "--sizes");
    if (o_max->count()) cfg.max_evaluations = max_evals;
    if (o_exh->count()) cfg.exhaustive_limit = exhaustive;
    if (o_res->count()) cfg.resume_token = resume;
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (estimate->parsed()) {
      const auto res = run_estimate_full(cfg);
      report_diagnostics(res.estimate, err);
      emit_csv(cfg, {res.row}, out);
    } else if (converge->parsed()) {
      emit_csv(cfg, convergence_study(cfg), out);
    } else if (sweep->parsed()) {
      emit_csv(cfg, design_sweep(cfg), out);
    } else if (subsets->parsed()) {
      const auto study = subset_study(cfg);
      emit_csv(cfg, study.rows, out);
      for (const auto& r : study.results)
        if (!r.candidates.empty())
          err << "d_m=" << r.d_m << (r.exhaustive ? " exhaustive" : " greedy") << " best=" << r.best_value
              << '\n';
      if (!study.resume_token.empty()) err << "incomplete; resume with --resume '" << study.resume_token << "'\n";
    } else if (validate_cmd->parsed()) {
      ValidationOptions vopt;
      vopt.workers = cfg.workers;
      std::vector<CriterionResult> results;
      if (criterion != 0) {
        results.push_back(run_criterion(criterion, vopt));
      } else {
        results = validate(suite, vopt);
      }
      std::vector<ResultRow> rows;
      bool ok = true;
      for (const auto& r : results) {
        err << format_result(r) << '\n';
        ok = ok && r.passed;
        rows.insert(rows.end(), r.rows.begin(), r.rows.end());
      }
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i].run_id = static_cast<long long>(i);
      if (!cfg.out.empty()) emit_csv(cfg, rows, out);
      if (!ok) {
        err << "failed:";
        for (const auto& r : results)
          if (!r.passed) err << ' ' << r.id;
        err << '\n';
        return kValidationFailed;
      }
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace mmeig::cli

#endif  // MMEIG_TOOLS_CLI_HPP
