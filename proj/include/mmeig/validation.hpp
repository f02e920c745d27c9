#ifndef MMEIG_VALIDATION_HPP
#define MMEIG_VALIDATION_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "benchmarks.hpp"
#include "core.hpp"
#include "estimators.hpp"
#include "harness.hpp"
#include "mode_atlas.hpp"

namespace mmeig {

struct CriterionResult {
  std::string id;  // "C1".."C8" or a property name
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  std::vector<ResultRow> rows;  // estimator runs performed by the check
};

struct ValidationOptions {
  std::function<int(double, int, double)> required_runs = [](double b, int k, double p) {
    return mmeig::required_runs(b, k, p);
  };
  std::uint64_t seed = 20240611;
  int workers = 1;
};

namespace detail {

class CheckLog {
 public:
  void check(bool ok, const std::string& what) {
    passed_ = passed_ && ok;
    if (!detail_.empty()) detail_ += "; ";
    detail_ += (ok ? "" : "FAILED ") + what;
  }
  bool passed() const { return passed_; }
  const std::string& detail() const { return detail_; }

 private:
  bool passed_ = true;
  std::string detail_;
};

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

template <typename Body>
CriterionResult timed(std::string id, std::string name, Body&& body) {
  CriterionResult r;
  r.id = std::move(id);
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    CheckLog log;
    body(log, r.rows);
    r.passed = log.passed();
    r.detail = log.detail();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline ResultRow row_of(const std::string& model, const EigEstimate& e, long long n) {
  return make_row(0, model, "-", e, n, 0.0);
}

inline SearchConfig runs(int n) {
  SearchConfig c;
  c.n = n;
  return c;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

//! Criterion 1: every estimator recovers log 2 on the 2-D linear-Gaussian benchmark.
inline CriterionResult criterion_linear_gaussian(const ValidationOptions& opt) {
  return detail::timed("C1", "linear-Gaussian oracle equivalence", [&](detail::CheckLog& log, auto& rows) {
    const auto b = make_linear_gaussian_model(Matrix::Identity(2, 2), Vector::Ones(2), 1.0);
    const double truth = *b.analytic_eig;
    log.check(std::abs(truth - std::log(2.0)) < 1e-12, "analytic EIG = log 2");
    const auto spec = b.experiment(1, opt.seed, opt.workers);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::pair<std::string, EigEstimate>> runs{
        {"dlmc", eig_dlmc(spec, 2000, 2000)},
        {"la", eig_la(spec, 2000, detail::runs(1))},
        {"mla", eig_mla(spec, 2000, detail::runs(5))},
        {"mnis", eig_mnis(spec, 2000, 100, detail::runs(5))},
    };
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& [name, e] : runs) {
      const double tol = std::max(3.0 * e.std_error, 0.01);
      log.check(std::abs(e.value - truth) <= tol,
                name + " " + detail::fmt(e.value) + " vs " + detail::fmt(truth) + " (tol " + detail::fmt(tol, 3) + ")");
      rows.push_back(detail::row_of("linear-gaussian", e, name == "dlmc" ? 0 : name == "la" ? 1 : 5));
    }
    log.check(secs < 120.0, "runtime " + detail::fmt(secs, 3) + " s < 120 s");
  });
}

//! Criterion 2: analytic mixture KL against the paper value, the log K shift and quadrature.
inline CriterionResult criterion_analytic_kl(const ValidationOptions&) {
  return detail::timed("C2", "analytic mixture KL", [&](detail::CheckLog& log, auto&) {
    const Prior prior = Prior::uniform(1, 0.0, 10.0);
    auto mode = [](double mu, double var, double w) {
      LaplaceMode m;
      m.location = Vector::Constant(1, mu);
      m.covariance = Matrix::Constant(1, 1, var);
      m.weight = w;
      return m;
    };
    const double single = analytic_kl_mixture(GaussianMixture({mode(2.0, 0.5, 1.0)}), prior);
    log.check(std::abs(single - 1.2302) <= 1e-4, "K=1 value " + detail::fmt(single, 8) + " vs 1.2302");
    double worst = 0.0;
    for (int k = 2; k <= 8; ++k) {
      std::vector<LaplaceMode> modes;
      for (int j = 0; j < k; ++j) modes.push_back(mode(1.0 + j, 0.5, 1.0));
      const double v = analytic_kl_mixture(GaussianMixture(modes), prior);
      worst = std::max(worst, std::abs((v - single) + std::log(static_cast<double>(k))));
    }
    log.check(worst <= 1e-12, "log K shift max error " + detail::fmt(worst, 3));
    const double var = 0.01, sep = 16.0 * std::sqrt(var);
    const std::vector<double> w{0.3, 0.3, 0.4}, mu{2.0, 2.0 + sep, 2.0 + 2.0 * sep}, v(3, var);
    const double quad = gm1d_kl_quadrature(w, mu, v, 0.0, 10.0);
    const double lap = analytic_kl_mixture(
        GaussianMixture({mode(mu[0], var, w[0]), mode(mu[1], var, w[1]), mode(mu[2], var, w[2])}), prior);
    log.check(std::abs(quad - lap) < 1e-3,
              "16 sigma separation: quadrature " + detail::fmt(quad, 8) + " vs analytic " + detail::fmt(lap, 8));
  });
}

//! Criterion 3: quadratic benchmark, MLA and MNIS agree and low-N DLMC sits above both.
inline CriterionResult criterion_quadratic(const ValidationOptions& opt) {
  return detail::timed("C3", "quadratic benchmark MLA/MNIS/DLMC", [&](detail::CheckLog& log, auto& rows) {
    const auto b = make_quadratic_model(1.0, 4.0);
    const auto spec = b.experiment(1, opt.seed, opt.workers);
    const auto t0 = std::chrono::steady_clock::now();
    const auto mla = eig_mla(spec, 1000, detail::runs(20));
    const auto mnis = eig_mnis(spec, 1000, 1000, detail::runs(20));
    rows.push_back(detail::row_of("quadratic", mla, 20));
    rows.push_back(detail::row_of("quadratic", mnis, 20));
    const double rel = std::abs(mla.value - mnis.value) / std::abs(mnis.value);
    log.check(rel <= 0.03, "MLA " + detail::fmt(mla.value) + " vs MNIS " + detail::fmt(mnis.value) +
                               " relative gap " + detail::fmt(100 * rel, 3) + "% <= 3%");
    std::vector<double> dlmc;
    for (int r = 0; r < 20; ++r) {
      auto s = spec;
      s.seed = detail::repeat_seed(opt.seed + 1, r);
      const auto e = eig_dlmc(s, 1000, 100);
      dlmc.push_back(e.value);
      rows.push_back(detail::row_of("quadratic", e, 0));
    }
    const double m = detail::mean_of(dlmc), se = detail::sd_of(dlmc) / std::sqrt(20.0);
    const double ref = std::max(mla.value, mnis.value);
    const double t = (m - ref) / std::hypot(se, std::max(mla.std_error, mnis.std_error));
    log.check(t > 1.729, "DLMC N=100 mean " + detail::fmt(m) + " above max(MLA, MNIS) " + detail::fmt(ref) +
                             ", one-sided t = " + detail::fmt(t, 3) + " > 1.729");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.check(secs < 900.0, "runtime " + detail::fmt(secs, 3) + " s < 900 s");
  });
}

namespace detail {

//! Synthetic quadratic datasets whose exact mode set has 8 elements.
inline std::vector<ObservationSet> eight_mode_datasets(const ModelBundle& b, int count, std::uint64_t seed) {
  std::vector<ObservationSet> out;
  for (std::uint64_t i = 0; static_cast<int>(out.size()) < count; ++i) {
    auto rng = RandomStream::substream(seed, i, Channel::aux);
    const Vector th = b.prior.sample(rng);
    auto data = simulate_observations(b.model, th, b.design, b.noise.sigma(), 1, rng);
    if (quadratic_mode_oracle(data, b.design[0], b.noise.sigma2()).size() == 8) out.push_back(std::move(data));
  }
  return out;
}

//! Number of oracle modes matched by the multistart search within the dedup radius.
inline int recovered_modes(const ModelBundle& b, const ObservationSet& data, int n, std::uint64_t seed,
                           std::uint64_t index) {
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, data);
  const auto target = PosteriorTarget::calibrated(prob);
  auto rng = RandomStream::substream(seed, index, Channel::search);
  const auto cfg = runs(n);
  const auto found = multistart_mode_search(posterior_objective(target), b.prior, cfg, rng);
  const double radius = cfg.dedup_radius * b.prior.scale();
  int hit = 0;
  for (const auto& o : quadratic_mode_oracle(data, b.design[0], b.noise.sigma2())) {
    for (const auto& m : found.modes) {
      if ((m.theta - o).norm() < radius) {
        ++hit;
        break;
      }
    }
  }
  return hit;
}

}  // namespace detail

//! Criterion 4: run-count bound and multistart mode recovery on the quadratic model.
inline CriterionResult criterion_mode_machinery(const ValidationOptions& opt) {
  return detail::timed("C4", "mode search machinery", [&](detail::CheckLog& log, auto&) {
    const int n_req = opt.required_runs(0.1, 8, 1.0 / 8.0);
    log.check(n_req == 30, "required_runs(0.1, 8, 1/8) = " + std::to_string(n_req) + ", expected 30");
    const auto b = make_quadratic_model(1.0, 4.0);
    const auto sets = detail::eight_mode_datasets(b, 100, opt.seed);
    int all30 = 0;
    double total20 = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      all30 += detail::recovered_modes(b, sets[i], 30, opt.seed + 30, i) == 8 ? 1 : 0;
      total20 += detail::recovered_modes(b, sets[i], 20, opt.seed + 20, i);
    }
    log.check(all30 >= 90, "n=30 recovered all 8 modes in " + std::to_string(all30) + "/100 datasets (>= 90)");
    const double avg = total20 / static_cast<double>(sets.size());
    log.check(avg >= 7.8, "n=20 average recovered modes " + detail::fmt(avg, 4) + " (>= 7.8)");
  });
}

//! Required-run bound against a direct search for the smallest n.
inline CriterionResult property_required_runs(const ValidationOptions& opt) {
  return detail::timed("required_runs", "required_runs matches the smallest n with K(1-p)^n <= beta",
                       [&](detail::CheckLog& log, auto&) {
                         int bad = 0;
                         std::string first;
                         for (double beta : {0.01, 0.05, 0.1, 0.3}) {
                           for (int k : {1, 2, 3, 5, 8, 16}) {
                             for (double p : {0.05, 0.125, 0.25, 0.5}) {
                               int n = 1;
                               while (k * std::pow(1.0 - p, n) > beta * (1.0 + 1e-12)) ++n;
                               const int got = opt.required_runs(beta, k, p);
                               if (got != n) {
                                 if (!bad)
                                   first = "(" + detail::fmt(beta) + ", " + std::to_string(k) + ", " +
                                           detail::fmt(p) + ") gave " + std::to_string(got) + ", expected " +
                                           std::to_string(n);
                                 ++bad;
                               }
                             }
                           }
                         }
                         log.check(bad == 0, bad ? std::to_string(bad) + " mismatches, first " + first
                                                 : "96 grid points agree");
                       });
}

//! Criterion 5: MNIS reduces to DLMC under a prior proposal and to LAIS when K = 1.
inline CriterionResult criterion_degeneracy(const ValidationOptions& opt) {
  return detail::timed("C5", "MNIS degeneracy identities", [&](detail::CheckLog& log, auto& rows) {
    const auto b = make_linear_gaussian_model(Matrix::Identity(2, 2), Vector::Ones(2), 1.0);
    const auto spec = b.experiment(1, opt.seed, opt.workers);
    const auto dlmc = eig_dlmc(spec, 500, 200);
    ImportanceOptions io;
    io.proposal = [&](const PosteriorTarget&) {
      return GaussianMixture::single(b.prior.mean(), Matrix(b.prior.variance().asDiagonal()));
    };
    const auto mnis_prior = eig_importance(spec, 500, 200, detail::runs(1), io);
    const double diff = std::abs(mnis_prior.value - dlmc.value);
    log.check(diff <= 1e-12, "prior proposal vs DLMC |diff| = " + detail::fmt(diff, 3));
    const auto mnis = eig_mnis(spec, 500, 200, detail::runs(5));
    const auto lais = eig_lais(spec, 500, 200, detail::runs(5));
    log.check(mnis.mean_modes == 1.0, "linear-Gaussian search returns one mode per sample");
    log.check(mnis.value == lais.value, "K=1 MNIS " + detail::fmt(mnis.value, 17) + " vs LAIS " +
                                            detail::fmt(lais.value, 17));
    rows.push_back(detail::row_of("linear-gaussian", dlmc, 0));
    rows.push_back(detail::row_of("linear-gaussian", mnis_prior, 0));
    rows.push_back(detail::row_of("linear-gaussian", mnis, 5));
    rows.push_back(detail::row_of("linear-gaussian", lais, 5));
  });
}

//! Criterion 6: four-sensor network, stable MNIS against biased low-N DLMC.
inline CriterionResult criterion_sensor4(const ValidationOptions& opt) {
  return detail::timed("C6", "sensor4 MNIS stability and DLMC bias", [&](detail::CheckLog& log, auto& rows) {
    const auto b = make_sensor_model(sensor4_spec()).bundle;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> values, ses;
    // Each unknown sensor has its own corner traps, so every run must land both
    // sensors in their true basins; 20 starts miss that in about 2% of samples.
    constexpr int n = 30;
    for (int r = 0; r < 5; ++r) {
      const auto spec = b.experiment(1, detail::repeat_seed(opt.seed, r), opt.workers);
      const auto e = eig_mnis(spec, 1000, 100, detail::runs(n));
      values.push_back(e.value);
      ses.push_back(e.std_error);
      rows.push_back(detail::row_of("sensor4", e, n));
      log.check(e.std_error / e.value < 0.02, "seed " + std::to_string(r) + ": MNIS " + detail::fmt(e.value) +
                                                  ", std_error/value " + detail::fmt(100 * e.std_error / e.value, 3) +
                                                  "% < 2%");
    }
    const double spread = *std::max_element(values.begin(), values.end()) - *std::min_element(values.begin(), values.end());
    const double se = detail::mean_of(ses);
    log.check(spread < 3.0 * se, "MNIS spread over 5 seeds " + detail::fmt(spread, 4) + " < 3 std_error " +
                                     detail::fmt(3.0 * se, 4));
    const double consensus = detail::mean_of(values);
    const auto dlmc = eig_dlmc(b.experiment(1, opt.seed, opt.workers), 1000, 100);
    rows.push_back(detail::row_of("sensor4", dlmc, 0));
    const double dev = std::abs(dlmc.value - consensus) / consensus;
    log.check(dev > 0.10, "DLMC N=100 " + detail::fmt(dlmc.value) + " deviates " + detail::fmt(100 * dev, 3) +
                              "% from MNIS consensus " + detail::fmt(consensus) + " (> 10%)");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.check(secs < 1200.0, "runtime " + detail::fmt(secs, 3) + " s < 1200 s");
  });
}

//! Criterion 7: six-sensor subset search, monotone best EIG with a diminishing gain.
inline CriterionResult criterion_subsets(const ValidationOptions& opt) {
  return detail::timed("C7", "sensor6 measurement-subset search", [&](detail::CheckLog& log, auto& rows) {
    RunConfig cfg;
    cfg.model = "sensor6";
    cfg.estimator = "mnis";
    cfg.outer = 200;
    cfg.inner = 100;
    cfg.mode_runs = 20;
    cfg.seed = opt.seed;
    cfg.workers = opt.workers;
    cfg.subset_sizes = {10};
    cfg.timing = false;
    const auto t0 = std::chrono::steady_clock::now();
    const auto study = subset_study(cfg);
    rows = study.rows;
    std::vector<double> best(11, 0.0), best_se(11, 0.0);
    for (const auto& r : study.results) {
      best[static_cast<std::size_t>(r.d_m)] = r.candidates.front().eig.value;
      best_se[static_cast<std::size_t>(r.d_m)] = r.candidates.front().eig.std_error;
    }
    std::string curve;
    for (int d : {2, 4, 6, 8, 10}) curve += " d" + std::to_string(d) + "=" + detail::fmt(best[d], 4);
    log.check(true, "max EIG:" + curve);
    for (int d : {2, 4, 6, 8}) {
      const double tol = 2.0 * std::hypot(best_se[d], best_se[d + 2]);
      log.check(best[d + 2] >= best[d] - tol, "d_m " + std::to_string(d) + "->" + std::to_string(d + 2) +
                                                  " non-decreasing within " + detail::fmt(tol, 3));
    }
    const double early = best[4] - best[2], late = best[10] - best[8];
    log.check(late < early, "gain 8->10 " + detail::fmt(late, 4) + " < gain 2->4 " + detail::fmt(early, 4));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.check(secs < 1800.0, "runtime " + detail::fmt(secs, 3) + " s < 1800 s");
  });
}

//! Byte-identical CSV for worker counts 1 and 4.
inline CriterionResult property_determinism(const ValidationOptions& opt) {
  return detail::timed("C8a", "CSV determinism across worker counts", [&](detail::CheckLog& log, auto& rows) {
    for (const std::string est : {"mla", "mnis", "dlmc"}) {
      RunConfig cfg;
      cfg.model = "quadratic";
      cfg.estimator = est;
      cfg.outer = 40;
      cfg.inner = 50;
      cfg.mode_runs = 5;
      cfg.seed = 7;
      cfg.timing = false;
      std::ostringstream a, b;
      cfg.workers = 1;
      const auto r1 = run_estimate(cfg);
      write_csv(a, {r1});
      cfg.workers = 4;
      write_csv(b, {run_estimate(cfg)});
      log.check(a.str() == b.str(), est + " CSV identical for workers 1 and 4");
      rows.push_back(r1);
    }
    (void)opt;
  });
}

//! Reported std_error against the spread of 50 independent MNIS runs.
inline CriterionResult property_std_error_honesty(const ValidationOptions& opt) {
  return detail::timed("C8b", "std_error honesty over 50 repeats", [&](detail::CheckLog& log, auto& rows) {
    const auto b = make_linear_gaussian_model(Matrix::Identity(2, 2), Vector::Ones(2), 1.0);
    std::vector<double> values, ses;
    for (int r = 0; r < 50; ++r) {
      const auto e = eig_mnis(b.experiment(1, detail::repeat_seed(opt.seed + 8, r), opt.workers), 2000, 100,
                              detail::runs(5));
      values.push_back(e.value);
      ses.push_back(e.std_error);
      rows.push_back(detail::row_of("linear-gaussian", e, 5));
    }
    const double ratio = detail::sd_of(values) / detail::mean_of(ses);
    log.check(ratio >= 0.7 && ratio <= 1.4, "empirical std / mean std_error = " + detail::fmt(ratio, 4) +
                                                " in [0.7, 1.4]");
  });
}

//! Criterion 8: determinism plus std_error honesty.
inline CriterionResult criterion_determinism(const ValidationOptions& opt) {
  auto a = property_determinism(opt);
  auto b = property_std_error_honesty(opt);
  CriterionResult r;
  r.id = "C8";
  r.name = "determinism and std_error honesty";
  r.passed = a.passed && b.passed;
  r.detail = a.detail + "; " + b.detail;
  r.seconds = a.seconds + b.seconds;
  r.rows = a.rows;
  r.rows.insert(r.rows.end(), b.rows.begin(), b.rows.end());
  return r;
}

inline CriterionResult run_criterion(int id, const ValidationOptions& opt) {
  switch (id) {
    case 1: return criterion_linear_gaussian(opt);
    case 2: return criterion_analytic_kl(opt);
    case 3: return criterion_quadratic(opt);
    case 4: return criterion_mode_machinery(opt);
    case 5: return criterion_degeneracy(opt);
    case 6: return criterion_sensor4(opt);
    case 7: return criterion_subsets(opt);
    case 8: return criterion_determinism(opt);
    default: throw ConfigError("unknown criterion " + std::to_string(id) + " (valid: 1-8)");
  }
}

/*!
 * The validation suite. "fast" covers the property checks and small oracles
 * (criteria 1, 2, 5, the required-runs property and CSV determinism); "full"
 * runs all eight criteria plus the required-runs property.
 */
inline std::vector<CriterionResult> validate(const std::string& suite, const ValidationOptions& opt = {}) {
  std::vector<CriterionResult> out;
  if (suite == "fast") {
    out.push_back(criterion_linear_gaussian(opt));
    out.push_back(criterion_analytic_kl(opt));
    out.push_back(property_required_runs(opt));
    out.push_back(criterion_degeneracy(opt));
    out.push_back(property_determinism(opt));
  } else if (suite == "full") {
    out.push_back(property_required_runs(opt));
    for (int id = 1; id <= 8; ++id) out.push_back(run_criterion(id, opt));
  } else {
    throw ConfigError("validate: suite must be 'fast' or 'full', got '" + suite + "'");
  }
  return out;
}

inline std::string format_result(const CriterionResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + "  " + r.id + "  " + r.name + "  [" +
         detail::fmt(r.seconds, 3) + " s]  " + r.detail;
}

}  // namespace mmeig

#endif  // MMEIG_VALIDATION_HPP
