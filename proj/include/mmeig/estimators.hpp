#ifndef MMEIG_ESTIMATORS_HPP
#define MMEIG_ESTIMATORS_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "mode_atlas.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "posterior.hpp"
#include "random.hpp"

namespace mmeig {

//! Prior, noise, design and replicate count of one experiment plus run settings.
struct ExperimentSpec {
  ForwardModel model;
  Prior prior;
  NoiseModel noise;
  DesignPoint design;
  int replicates = 1;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct EigEstimate {
  std::string estimator;
  double value = 0.0;       // nats
  double std_error = 0.0;   // outer-loop standard error
  long long outer_samples = 0;
  long long inner_samples = 0;
  long long mode_search_runs = 0;
  long long likelihood_evals = 0;
  long long optimizer_runs = 0;
  long long objective_evals = 0;
  long long underflow_count = 0;
  long long skipped_samples = 0;
  long long boundary_modes = 0;
  long long unstable_samples = 0;  // inner weights with max/median > 1e3
  double max_weight_ratio = 0.0;
  double mean_modes = 0.0;         // average number of mixture components
  double outer_variance = 0.0;     // sample variance of the outer terms (C1^2)
  double inner_c2 = 0.0;           // mean of half the inner relative variance (C2)
  std::vector<double> terms;       // per-outer-sample contributions, skipped ones excluded
};

//! How the single-mode Laplace estimator treats the prior.
enum class LaplaceForm {
  with_prior_term,  // -1/2 log|Sigma| - h(theta) - tr(Sigma H_h)/2 - d/2 - d/2 log 2pi
  literal,          // -1/2 log|Sigma| - tr(Sigma H_h)/2 - d/2 - d/2 log 2pi
};

/*!
 * Laplace approximation of KL(posterior || prior) from a Gaussian mixture
 * surrogate:
 *   sum_k [w_k log w_k - w_k/2 log|Sigma_k| - w_k h(theta_k)] - d/2 log 2pi - d/2
 * with h = log p. For priors with curvature the term -w_k tr(Sigma_k H_h)/2
 * is added (it vanishes for uniform priors).
 */
inline double analytic_kl_mixture(const GaussianMixture& mix, const Prior& prior,
                                  bool prior_curvature_term = true) {
  const int d = mix.dim();
  if (prior.dim() != d) throw DomainError("analytic_kl_mixture: prior dimension mismatch");
  double acc = 0.0;
  const Matrix hh = prior.neg_log_hessian();
  for (std::size_t k = 0; k < mix.size(); ++k) {
    const auto& m = mix.mode(k);
    const double h = prior.log_density(m.location);
    if (!std::isfinite(h))
      throw DomainError("analytic_kl_mixture: mode outside prior support at " + format_vector(m.location));
    const double w = m.weight;
    if (w <= 0.0) continue;
    acc += w * std::log(w) - 0.5 * w * mix.log_det(k) - w * h;
    if (prior_curvature_term && prior.has_curvature())
      acc += 0.5 * w * (m.covariance.cwiseProduct(hh)).sum();
  }
  return acc - 0.5 * d * kLog2Pi - 0.5 * d;
}

//! Summary of one inner importance-weighted average, in log domain.
struct InnerSummary {
  double log_mean = -kInf;  // log (1/N) sum_j w_j
  double half_rel_var = 0.0;
  double max_over_median = 1.0;
  bool underflow = false;
};

inline InnerSummary summarize_inner(std::vector<double> logw) {
  InnerSummary s;
  s.log_mean = log_mean_exp(logw);
  if (!std::isfinite(s.log_mean)) {
    s.underflow = true;
    return s;
  }
  std::vector<double> sq(logw.size());
  std::transform(logw.begin(), logw.end(), sq.begin(), [](double v) { return 2.0 * v; });
  const double rel = std::exp(log_mean_exp(sq) - 2.0 * s.log_mean) - 1.0;
  s.half_rel_var = 0.5 * std::max(0.0, rel);
  // Ratio over the nonzero weights; zero weights come from out-of-support draws.
  std::erase_if(logw, [](double v) { return v == -kInf; });
  const auto mid = logw.begin() + static_cast<std::ptrdiff_t>(logw.size() / 2);
  const double hi = *std::max_element(logw.begin(), logw.end());
  std::nth_element(logw.begin(), mid, logw.end());
  s.max_over_median = std::exp(hi - *mid);
  return s;
}

//! One outer contribution: log p(ybar|theta_true) - log(evidence estimate).
struct OuterTerm {
  double value = 0.0;
  InnerSummary inner;
};

//! DLMC contribution with prior-distributed inner samples.
inline OuterTerm dlmc_term(const PosteriorTarget& target, const Vector& theta_true,
                           std::span<const Vector> inner) {
  std::vector<double> logw;
  logw.reserve(inner.size());
  for (const auto& th : inner) logw.push_back(target.log_likelihood(th));
  OuterTerm t;
  t.inner = summarize_inner(std::move(logw));
  t.value = t.inner.underflow ? kInf : target.log_likelihood(theta_true) - t.inner.log_mean;
  return t;
}

/*!
 * Importance-sampled contribution; inner samples come from `proposal` and
 * carry the likelihood ratio p(theta)/q(theta). Samples outside the prior
 * support get zero weight.
 */
inline OuterTerm importance_term(const PosteriorTarget& target, const Vector& theta_true,
                                 const GaussianMixture& proposal, std::span<const Vector> inner) {
  const Prior& prior = target.problem().prior();
  std::vector<double> logw;
  logw.reserve(inner.size());
  for (const auto& th : inner) {
    const double lp = prior.log_density(th);
    if (!std::isfinite(lp)) {
      logw.push_back(-kInf);
      continue;
    }
    logw.push_back(target.log_likelihood(th) + lp - proposal.logpdf(th));
  }
  OuterTerm t;
  t.inner = summarize_inner(std::move(logw));
  t.value = t.inner.underflow ? kInf : target.log_likelihood(theta_true) - t.inner.log_mean;
  return t;
}

namespace detail {

//! State of one outer sample: true parameter, data and marginalization set.
struct OuterDraw {
  Vector theta_true;
  double sigma_true = 0.0;
  std::vector<double> sigmas;
  ObservationSet data;
};

inline OuterDraw draw_outer(const ExperimentSpec& spec, std::size_t i, int marginal_samples) {
  OuterDraw o;
  auto rng = RandomStream::substream(spec.seed, i, Channel::outer);
  o.theta_true = sample_prior(spec.prior, rng);
  o.sigma_true = spec.noise.sample_sigma(rng);
  o.data = simulate_observations(spec.model, o.theta_true, spec.design, o.sigma_true,
                                 spec.replicates, rng);
  if (spec.noise.is_calibrated()) {
    o.sigmas = {spec.noise.sigma()};
  } else {
    auto srng = RandomStream::substream(spec.seed, i, Channel::sigma);
    o.sigmas.resize(static_cast<std::size_t>(marginal_samples));
    for (auto& s : o.sigmas) s = spec.noise.sample_sigma(srng);
  }
  return o;
}

struct SampleResult {
  bool skipped = false;
  OuterTerm term;
  long long likelihood_evals = 0;
  long long optimizer_runs = 0;
  long long objective_evals = 0;
  long long modes = 0;
  long long boundary_modes = 0;
};

inline void check_counts(const char* name, long long outer, long long inner) {
  if (outer < 1) throw DomainError(std::string(name) + ": outer sample count must be >= 1");
  if (inner < 1) throw DomainError(std::string(name) + ": inner sample count must be >= 1");
}

inline EigEstimate reduce(std::string name, const std::vector<SampleResult>& results,
                          long long inner, long long runs_per_sample) {
  EigEstimate est;
  est.estimator = std::move(name);
  est.outer_samples = static_cast<long long>(results.size());
  est.inner_samples = inner;
  est.mode_search_runs = runs_per_sample;
  double c2 = 0.0;
  long long with_inner = 0;
  long long kept_modes = 0;
  for (const auto& r : results) {
    est.likelihood_evals += r.likelihood_evals;
    est.optimizer_runs += r.optimizer_runs;
    est.objective_evals += r.objective_evals;
    if (r.skipped) {
      ++est.skipped_samples;
      continue;
    }
    est.terms.push_back(r.term.value);
    est.boundary_modes += r.boundary_modes;
    kept_modes += r.modes;
    if (r.term.inner.underflow) ++est.underflow_count;
    if (inner > 0 && !r.term.inner.underflow) {
      c2 += r.term.inner.half_rel_var;
      ++with_inner;
      est.max_weight_ratio = std::max(est.max_weight_ratio, r.term.inner.max_over_median);
      if (r.term.inner.max_over_median > 1e3) ++est.unstable_samples;
    }
  }
  if (static_cast<double>(est.skipped_samples) > 0.1 * static_cast<double>(results.size()))
    throw EstimatorError(est.estimator + ": " + std::to_string(est.skipped_samples) + " of " +
                         std::to_string(results.size()) + " outer samples failed (limit 10%)");
  const auto n = static_cast<double>(est.terms.size());
  double mean = 0.0;
  for (double v : est.terms) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : est.terms) var += (v - mean) * (v - mean);
  var = est.terms.size() > 1 ? var / (n - 1.0) : 0.0;
  est.value = mean;
  est.outer_variance = var;
  est.std_error = std::sqrt(var / n);
  est.inner_c2 = with_inner > 0 ? c2 / static_cast<double>(with_inner) : 0.0;
  est.mean_modes = n > 0 ? static_cast<double>(kept_modes) / n : 0.0;
  return est;
}

inline std::vector<Vector> draw_prior_samples(const Prior& prior, long long n, RandomStream& rng) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long long j = 0; j < n; ++j) out.push_back(prior.sample(rng));
  return out;
}

inline std::vector<Vector> draw_mixture_samples(const GaussianMixture& mix, long long n,
                                                RandomStream& rng) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long long j = 0; j < n; ++j) out.push_back(mix.sample(rng));
  return out;
}

}  // namespace detail

//! Double-loop Monte Carlo with M outer and N inner prior samples.
inline EigEstimate eig_dlmc(const ExperimentSpec& spec, long long M, long long N) {
  const int marginal_samples = spec.noise.marginal_samples();
  detail::check_counts("eig_dlmc", M, N);
  auto results = parallel_map(static_cast<std::size_t>(M), spec.workers, [&](std::size_t i) {
    const auto o = detail::draw_outer(spec, i, marginal_samples);
    const PosteriorProblem prob(spec.model, spec.prior, spec.noise, spec.design, o.data);
    const PosteriorTarget target(prob, o.sigmas);
    auto rng = RandomStream::substream(spec.seed, i, Channel::inner);
    const auto inner = detail::draw_prior_samples(spec.prior, N, rng);
    detail::SampleResult r;
    r.term = dlmc_term(target, o.theta_true, inner);
    r.likelihood_evals = 1 + N;
    return r;
  });
  return detail::reduce("dlmc", results, N, 0);
}

namespace detail {

struct SearchOutcome {
  std::optional<GaussianMixture> mixture;
  long long objective_evals = 0;
};

inline SearchOutcome search_and_fit(const PosteriorTarget& target, const Prior& prior,
                                    const SearchConfig& cfg, RandomStream& rng) {
  SearchOutcome out;
  const auto obj = posterior_objective(target);
  try {
    const auto found = multistart_mode_search(obj, prior, cfg, rng);
    out.objective_evals = found.objective_evaluations;
    out.mixture.emplace(fit_laplace_mixture(target, found.modes, cfg));
  } catch (const SearchFailureError&) {
  } catch (const SingularityError&) {
  }
  return out;
}

inline long long count_boundary(const GaussianMixture& mix) {
  long long b = 0;
  for (const auto& m : mix.modes()) b += m.at_boundary ? 1 : 0;
  return b;
}

}  // namespace detail

/*!
 * Single-mode Laplace estimator: one MAP search per outer sample from a
 * prior-drawn start (the search stream's first Latin hypercube point).
 */
inline EigEstimate eig_la(const ExperimentSpec& spec, long long M, SearchConfig cfg,
                          LaplaceForm form = LaplaceForm::with_prior_term) {
  if (M < 1) throw DomainError("eig_la: outer sample count must be >= 1");
  cfg.n = 1;
  cfg.validate();
  const int d = spec.prior.dim();
  auto results = parallel_map(static_cast<std::size_t>(M), spec.workers, [&](std::size_t i) {
    const auto o = detail::draw_outer(spec, i, spec.noise.marginal_samples());
    const PosteriorProblem prob(spec.model, spec.prior, spec.noise, spec.design, o.data);
    const PosteriorTarget target(prob, o.sigmas);
    auto rng = RandomStream::substream(spec.seed, i, Channel::search);
    const auto fit = detail::search_and_fit(target, spec.prior, cfg, rng);
    detail::SampleResult r;
    r.optimizer_runs = 1;
    r.objective_evals = fit.objective_evals;
    if (!fit.mixture) {
      r.skipped = true;
      return r;
    }
    const auto& mix = *fit.mixture;
    if (form == LaplaceForm::with_prior_term) {
      r.term.value = analytic_kl_mixture(mix, spec.prior);
    } else {
      double v = -0.5 * mix.log_det(0) - 0.5 * d - 0.5 * d * kLog2Pi;
      if (spec.prior.has_curvature())
        v += 0.5 * (mix.mode(0).covariance.cwiseProduct(spec.prior.neg_log_hessian())).sum();
      r.term.value = v;
    }
    r.modes = 1;
    r.boundary_modes = detail::count_boundary(mix);
    return r;
  });
  return detail::reduce("la", results, 0, 1);
}

//! Multimodal Laplace approximation: multistart search + analytic mixture KL.
inline EigEstimate eig_mla(const ExperimentSpec& spec, long long M, const SearchConfig& cfg) {
  if (M < 1) throw DomainError("eig_mla: outer sample count must be >= 1");
  cfg.validate();
  auto results = parallel_map(static_cast<std::size_t>(M), spec.workers, [&](std::size_t i) {
    const auto o = detail::draw_outer(spec, i, spec.noise.marginal_samples());
    const PosteriorProblem prob(spec.model, spec.prior, spec.noise, spec.design, o.data);
    const PosteriorTarget target(prob, o.sigmas);
    auto rng = RandomStream::substream(spec.seed, i, Channel::search);
    const auto fit = detail::search_and_fit(target, spec.prior, cfg, rng);
    detail::SampleResult r;
    r.optimizer_runs = cfg.n;
    r.likelihood_evals = 1;
    r.objective_evals = fit.objective_evals;
    if (!fit.mixture) {
      r.skipped = true;
      return r;
    }
    r.term.value = analytic_kl_mixture(*fit.mixture, spec.prior);
    r.modes = static_cast<long long>(fit.mixture->size());
    r.boundary_modes = detail::count_boundary(*fit.mixture);
    return r;
  });
  return detail::reduce("mla", results, 0, cfg.n);
}

struct ImportanceOptions {
  //! Use only the highest-weight component as proposal (Laplace-based IS).
  bool single_mode = false;
  //! Replaces the mode search; called once per outer sample.
  std::function<GaussianMixture(const PosteriorTarget&)> proposal;
  int marginal_samples = 1;
  std::string name = "mnis";
};

/*!
 * Nested importance sampling with a Laplace-mixture proposal fitted per outer
 * sample. Handles both calibrated and uncalibrated noise.
 */
inline EigEstimate eig_importance(const ExperimentSpec& spec, long long M, long long N,
                                  const SearchConfig& cfg, const ImportanceOptions& opt) {
  detail::check_counts(opt.name.c_str(), M, N);
  cfg.validate();
  auto results = parallel_map(static_cast<std::size_t>(M), spec.workers, [&](std::size_t i) {
    const auto o = detail::draw_outer(spec, i, opt.marginal_samples);
    const PosteriorProblem prob(spec.model, spec.prior, spec.noise, spec.design, o.data);
    const PosteriorTarget target(prob, o.sigmas);
    detail::SampleResult r;
    std::optional<GaussianMixture> proposal;
    if (opt.proposal) {
      proposal.emplace(opt.proposal(target));
    } else {
      auto srng = RandomStream::substream(spec.seed, i, Channel::search);
      auto fit = detail::search_and_fit(target, spec.prior, cfg, srng);
      r.optimizer_runs = cfg.n;
      r.objective_evals = fit.objective_evals;
      if (!fit.mixture) {
        r.skipped = true;
        return r;
      }
      proposal = std::move(fit.mixture);
      if (opt.single_mode && proposal->size() > 1) {
        const auto& modes = proposal->modes();
        auto top = std::max_element(modes.begin(), modes.end(), [](const auto& a, const auto& b) {
          return a.weight < b.weight;
        });
        LaplaceMode m = *top;
        m.weight = 1.0;
        proposal.emplace(std::vector<LaplaceMode>{std::move(m)});
      }
    }
    auto rng = RandomStream::substream(spec.seed, i, Channel::inner);
    const auto inner = detail::draw_mixture_samples(*proposal, N, rng);
    r.term = importance_term(target, o.theta_true, *proposal, inner);
    r.likelihood_evals = 1 + N;
    r.modes = static_cast<long long>(proposal->size());
    r.boundary_modes = detail::count_boundary(*proposal);
    return r;
  });
  return detail::reduce(opt.name, results, N, opt.proposal ? 0 : cfg.n);
}

//! Multimodal nested importance sampling.
inline EigEstimate eig_mnis(const ExperimentSpec& spec, long long M, long long N,
                            const SearchConfig& cfg) {
  ImportanceOptions opt;
  opt.marginal_samples = spec.noise.marginal_samples();
  return eig_importance(spec, M, N, cfg, opt);
}

//! MNIS for uncalibrated noise with L marginalization samples per outer sample.
inline EigEstimate eig_mnis_uncalibrated(const ExperimentSpec& spec, long long M, long long N,
                                         int L, const SearchConfig& cfg) {
  if (spec.noise.is_calibrated())
    throw DomainError("eig_mnis_uncalibrated: noise model is calibrated");
  if (L < 1) throw DomainError("eig_mnis_uncalibrated: L must be >= 1");
  ImportanceOptions opt;
  opt.marginal_samples = L;
  opt.name = "mnis-uncalibrated";
  return eig_importance(spec, M, N, cfg, opt);
}

/*!
 * Laplace-based importance sampling: the proposal is the single
 * highest-weight Laplace Gaussian. The default search uses one start.
 */
inline EigEstimate eig_lais(const ExperimentSpec& spec, long long M, long long N,
                            SearchConfig cfg = [] {
                              SearchConfig c;
                              c.n = 1;
                              return c;
                            }()) {
  ImportanceOptions opt;
  opt.single_mode = true;
  opt.marginal_samples = spec.noise.marginal_samples();
  opt.name = "lais";
  return eig_importance(spec, M, N, cfg, opt);
}

// ---------------------------------------------------------------------------
// Cost and sample-size models

enum class Scheme { dlmc, la, lais, mla, mnis, mnis_uncalibrated };

inline Scheme parse_scheme(const std::string& s) {
  if (s == "dlmc") return Scheme::dlmc;
  if (s == "la") return Scheme::la;
  if (s == "lais") return Scheme::lais;
  if (s == "mla") return Scheme::mla;
  if (s == "mnis") return Scheme::mnis;
  if (s == "mnis-uncalibrated") return Scheme::mnis_uncalibrated;
  throw DomainError("unknown scheme '" + s + "' (valid: dlmc, la, lais, mla, mnis, mnis-uncalibrated)");
}

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::dlmc: return "dlmc";
    case Scheme::la: return "la";
    case Scheme::lais: return "lais";
    case Scheme::mla: return "mla";
    case Scheme::mnis: return "mnis";
    case Scheme::mnis_uncalibrated: return "mnis-uncalibrated";
  }
  return "?";
}

inline bool has_inner_loop(Scheme s) {
  return s == Scheme::dlmc || s == Scheme::lais || s == Scheme::mnis ||
         s == Scheme::mnis_uncalibrated;
}

struct CostReport {
  std::string scheme;
  double W = 0.0;
};

/*!
 * Work in units of optimization runs (C_o) and likelihood evaluations (C_l):
 *   DLMC M(C_l + N C_l), LA M C_o, LAIS M(C_o + C_l + N C_l),
 *   MLA M(n C_o + C_l), MNIS M(n C_o + C_l + N C_l).
 */
inline CostReport cost_model(const std::string& scheme, double M, double N, double n, double C_o,
                             double C_l) {
  if (M < 0 || N < 0 || n < 0 || C_o < 0 || C_l < 0)
    throw DomainError("cost_model: counts and unit costs must be >= 0");
  const Scheme s = parse_scheme(scheme);
  double w = 0.0;
  switch (s) {
    case Scheme::dlmc: w = M * (C_l + N * C_l); break;
    case Scheme::la: w = M * C_o; break;
    case Scheme::lais: w = M * (C_o + C_l + N * C_l); break;
    case Scheme::mla: w = M * (n * C_o + C_l); break;
    case Scheme::mnis:
    case Scheme::mnis_uncalibrated: w = M * (n * C_o + C_l + N * C_l); break;
  }
  if (!(w > 0.0)) throw DomainError("cost_model: total cost must be positive");
  return {to_string(s), w};
}

//! Cost recomputed from an estimate's measured counters.
inline double measured_cost(const EigEstimate& est, double C_o, double C_l) {
  return static_cast<double>(est.optimizer_runs) * C_o +
         static_cast<double>(est.likelihood_evals) * C_l;
}

struct PilotDiagnostics {
  Scheme scheme = Scheme::dlmc;
  double outer_variance = 0.0;
  double inner_c2 = 0.0;

  static PilotDiagnostics from(const EigEstimate& est) {
    return {parse_scheme(est.estimator), est.outer_variance, est.inner_c2};
  }
};

struct SampleSizes {
  long long M = 0;
  long long N = 0;
};

/*!
 * Allocation for a mean-square error of TOL^2 with the bias budget gamma TOL:
 * M = V_outer / ((1 - gamma) TOL)^2 and, for schemes with an inner loop,
 * N = C2 / (gamma TOL).
 */
inline SampleSizes estimate_sample_sizes(const PilotDiagnostics& pilot, double tol, double gamma) {
  if (!(tol > 0.0)) throw DomainError("estimate_sample_sizes: TOL must be > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("estimate_sample_sizes: gamma must be in (0, 1)");
  if (!(pilot.outer_variance > 0.0))
    throw EstimatorError("estimate_sample_sizes: degenerate pilot (zero outer variance)");
  if (has_inner_loop(pilot.scheme) && !(pilot.inner_c2 > 0.0))
    throw EstimatorError("estimate_sample_sizes: degenerate pilot (zero inner variance)");
  SampleSizes out;
  const double stat = (1.0 - gamma) * tol;
  out.M = static_cast<long long>(std::ceil(pilot.outer_variance / (stat * stat) - 1e-9));
  if (has_inner_loop(pilot.scheme))
    out.N = static_cast<long long>(std::ceil(pilot.inner_c2 / (gamma * tol) - 1e-9));
  out.M = std::max<long long>(out.M, 1);
  if (has_inner_loop(pilot.scheme)) out.N = std::max<long long>(out.N, 1);
  return out;
}

}  // namespace mmeig

#endif  // MMEIG_ESTIMATORS_HPP
