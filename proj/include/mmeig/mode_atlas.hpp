#ifndef MMEIG_MODE_ATLAS_HPP
#define MMEIG_MODE_ATLAS_HPP

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "optimize.hpp"
#include "posterior.hpp"
#include "random.hpp"

namespace mmeig {

//! One local Gaussian fitted at a posterior mode.
struct LaplaceMode {
  Vector location;
  Matrix covariance;
  double peak_log_kernel = 0.0;  // unnormalized log posterior at the mode
  double weight = 1.0;
  bool at_boundary = false;
};

/*!
 * Weighted Gaussian mixture used both as posterior surrogate and as an
 * importance proposal. Weights are renormalized on construction; the
 * Cholesky factor and log-determinant of every component are cached.
 */
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<LaplaceMode> modes) : modes_(std::move(modes)) {
    if (modes_.empty()) throw DomainError("GaussianMixture: needs at least one mode");
    d_ = static_cast<int>(modes_.front().location.size());
    double total = 0.0;
    for (const auto& m : modes_) {
      if (m.location.size() != d_ || m.covariance.rows() != d_ || m.covariance.cols() != d_)
        throw DomainError("GaussianMixture: inconsistent component dimensions");
      if (!(m.weight >= 0.0)) throw DomainError("GaussianMixture: negative weight");
      total += m.weight;
    }
    if (!(total > 0.0)) throw DomainError("GaussianMixture: weights sum to zero");
    chol_.reserve(modes_.size());
    for (auto& m : modes_) {
      m.weight /= total;
      Eigen::LLT<Matrix> llt(m.covariance);
      if (llt.info() != Eigen::Success)
        throw SingularityError("GaussianMixture: covariance not SPD at " + format_vector(m.location));
      Matrix l = llt.matrixL();
      log_det_.push_back(2.0 * l.diagonal().array().log().sum());
      log_weight_.push_back(std::log(m.weight));
      chol_.push_back(std::move(l));
    }
  }

  static GaussianMixture single(Vector mean, Matrix covariance) {
    LaplaceMode m;
    m.location = std::move(mean);
    m.covariance = std::move(covariance);
    return GaussianMixture({std::move(m)});
  }

  int dim() const { return d_; }
  std::size_t size() const { return modes_.size(); }
  const std::vector<LaplaceMode>& modes() const { return modes_; }
  const LaplaceMode& mode(std::size_t k) const { return modes_[k]; }
  double log_det(std::size_t k) const { return log_det_[k]; }
  const Matrix& cholesky(std::size_t k) const { return chol_[k]; }

  double component_logpdf(std::size_t k, const Vector& theta) const {
    const Vector z = chol_[k].triangularView<Eigen::Lower>().solve(theta - modes_[k].location);
    return -0.5 * (d_ * kLog2Pi + log_det_[k] + z.squaredNorm());
  }

  double logpdf(const Vector& theta) const {
    if (theta.size() != d_) throw DomainError("mixture_logpdf: dimension mismatch");
    if (modes_.size() == 1) return component_logpdf(0, theta);
    LogSumExp acc;
    for (std::size_t k = 0; k < modes_.size(); ++k)
      acc.add(log_weight_[k] + component_logpdf(k, theta));
    return acc.value();
  }

  //! Component chosen with probability w_k, then mean + L z.
  Vector sample(RandomStream& rng) const {
    std::size_t k = 0;
    if (modes_.size() > 1) {
      const double u = rng.uniform();
      double cum = 0.0;
      k = modes_.size() - 1;
      for (std::size_t j = 0; j < modes_.size(); ++j) {
        cum += modes_[j].weight;
        if (u < cum) {
          k = j;
          break;
        }
      }
    }
    const Vector z = rng.normal_vector(d_);
    return modes_[k].location + chol_[k] * z;
  }

  double weight_sum() const {
    double s = 0.0;
    for (const auto& m : modes_) s += m.weight;
    return s;
  }

 private:
  std::vector<LaplaceMode> modes_;
  std::vector<Matrix> chol_;
  std::vector<double> log_det_;
  std::vector<double> log_weight_;
  int d_ = 0;
};

inline double mixture_logpdf(const GaussianMixture& mix, const Vector& theta) {
  return mix.logpdf(theta);
}

inline Vector mixture_sample(const GaussianMixture& mix, RandomStream& rng) {
  return mix.sample(rng);
}

/*!
 * Smallest n with K (1 - p)^n <= beta, i.e. ceil((log beta - log K) / log(1 - p)).
 * Independent of the parameter dimension.
 */
inline int required_runs(double beta, int K, double p) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("required_runs: beta must be in (0, 1)");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("required_runs: p must be in (0, 1)");
  if (K < 1) throw DomainError("required_runs: K must be >= 1");
  const double bound = (std::log(beta) - std::log(static_cast<double>(K))) / std::log1p(-p);
  return std::max(1, static_cast<int>(std::ceil(bound - 1e-12)));
}

/*!
 * Latin hypercube over the prior: coordinate i of point k falls in stratum
 * perm_i[k] of n equal-probability strata, placed at a uniform position inside
 * the stratum and mapped through the marginal quantile. With iterations > 1
 * the design with the largest minimum pairwise distance (in probability
 * space) among `iterations` candidates is kept.
 */
inline std::vector<Vector> latin_hypercube_starts(const Prior& prior, int n, RandomStream& rng,
                                                  int iterations = 1) {
  if (n < 1) throw DomainError("latin_hypercube_starts: n must be >= 1");
  if (iterations < 1) throw DomainError("latin_hypercube_starts: iterations must be >= 1");
  const int d = prior.dim();
  std::vector<Vector> best;
  double best_score = -1.0;
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int round = 0; round < iterations; ++round) {
    std::vector<Vector> unit(static_cast<std::size_t>(n), Vector(d));
    for (int i = 0; i < d; ++i) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      for (int k = 0; k < n; ++k)
        unit[static_cast<std::size_t>(k)][i] = (perm[static_cast<std::size_t>(k)] + rng.uniform()) / n;
    }
    double score = kInf;
    if (iterations > 1)
      for (std::size_t a = 0; a < unit.size(); ++a)
        for (std::size_t b = a + 1; b < unit.size(); ++b)
          score = std::min(score, (unit[a] - unit[b]).squaredNorm());
    if (score > best_score) {
      best_score = score;
      best = std::move(unit);
    }
  }
  for (auto& p : best)
    for (int i = 0; i < d; ++i) p[i] = prior.quantile(i, p[i]);
  return best;
}

struct ModeSearchResult {
  std::vector<MapResult> modes;  // deduplicated, sorted by objective value
  std::vector<MapResult> runs;   // every run, in start order
  int converged_runs = 0;
  int rejected_starts = 0;
  int boundary_modes = 0;
  long long objective_evaluations = 0;
};

//! Keep the best representative of each cluster of points closer than `radius`.
inline std::vector<MapResult> dedup_modes(std::vector<MapResult> found, double radius) {
  std::stable_sort(found.begin(), found.end(),
                   [](const MapResult& a, const MapResult& b) { return a.value < b.value; });
  std::vector<MapResult> kept;
  for (auto& r : found) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const MapResult& k) {
      return (k.theta - r.theta).norm() < radius;
    });
    if (!dup) kept.push_back(std::move(r));
  }
  return kept;
}

inline std::optional<Box> prior_box(const Prior& prior) {
  if (!prior.is_uniform()) return std::nullopt;
  return Box{prior.lower(), prior.upper()};
}

/*!
 * n local minimizations from Latin hypercube starts; converged results are
 * merged when closer than dedup_radius * prior.scale().
 */
inline ModeSearchResult multistart_mode_search(const Objective& objective, const Prior& prior,
                                               const SearchConfig& cfg, RandomStream& rng) {
  cfg.validate();
  const auto starts = latin_hypercube_starts(prior, cfg.n, rng, cfg.lhs_iterations);
  const auto box = prior_box(prior);
  const double scale = prior.scale() > 0.0 ? prior.scale() : 1.0;
  ModeSearchResult out;
  std::vector<MapResult> converged;
  for (const auto& s : starts) {
    MapResult r;
    try {
      r = find_map(objective, s, cfg, box, 0.5 * scale);
    } catch (const StartRejectedError&) {
      ++out.rejected_starts;
      r.theta = s;
    }
    out.objective_evaluations += r.evaluations;
    if (r.converged) converged.push_back(r);
    out.runs.push_back(std::move(r));
  }
  out.converged_runs = static_cast<int>(converged.size());
  if (converged.empty())
    throw SearchFailureError("mode search: none of " + std::to_string(cfg.n) + " runs converged (" +
                                 std::to_string(out.rejected_starts) + " starts rejected)",
                             cfg.n, 0);
  out.modes = dedup_modes(std::move(converged), cfg.dedup_radius * scale);
  for (const auto& m : out.modes) out.boundary_modes += m.at_boundary ? 1 : 0;
  return out;
}

//! Objective view (value + analytic gradient) of a posterior target.
inline Objective posterior_objective(const PosteriorTarget& target) {
  Objective obj;
  obj.value = [&target](const Vector& th) { return target.neg_log_posterior(th); };
  obj.gradient = [&target](const Vector& th) { return target.gradient(th); };
  return obj;
}

enum class CurvaturePolicy {
  gauss_newton,  // always Gauss-Newton (clamped when singular)
  gauss_newton_with_fallback,  // full Hessian when Gauss-Newton needed clamping
};

/*!
 * Smallest curvature allowed for a component under a uniform prior: the
 * precision 12 / w^2 of the widest prior side, so no Laplace component is
 * broader than the prior itself. Zero for Gaussian priors, whose curvature
 * already enters the Hessian.
 */
inline double uniform_precision_floor(const Prior& prior) {
  if (!prior.is_uniform()) return 0.0;
  const double w = (prior.upper() - prior.lower()).maxCoeff();
  return w > 0.0 ? 12.0 / (w * w) : 0.0;
}

/*!
 * Laplace Gaussian at each mode and normalized weights
 * w_k ~ exp(peak_log_kernel_k) (2 pi)^{d/2} |Sigma_k|^{1/2}. Components with
 * normalized weight below cfg.weight_floor are dropped. Hessian eigenvalues
 * are raised to uniform_precision_floor.
 */
inline GaussianMixture fit_laplace_mixture(
    const PosteriorTarget& target, std::span<const MapResult> modes, const SearchConfig& cfg,
    CurvaturePolicy policy = CurvaturePolicy::gauss_newton_with_fallback) {
  if (modes.empty()) throw DomainError("fit_laplace_mixture: no mode locations");
  const int d = target.dim();
  const double precision_floor = uniform_precision_floor(target.problem().prior());
  std::vector<LaplaceMode> comps;
  std::vector<double> log_w;
  for (const auto& m : modes) {
    auto curv = target.gauss_newton(m.theta);
    Matrix hessian = std::move(curv.hessian);
    if (curv.clamped && policy == CurvaturePolicy::gauss_newton_with_fallback) {
      const Matrix full = target.finite_difference_hessian(m.theta);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(full, Eigen::EigenvaluesOnly);
      const double tr = full.trace();
      if (tr > 0.0 && eig.eigenvalues().minCoeff() > 1e-10 * tr / d) hessian = full;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian);
    Vector lam = eig.eigenvalues();
    if (!(lam.minCoeff() > 0.0))
      throw SingularityError("fit_laplace_mixture: singular Hessian at " + format_vector(m.theta));
    lam = lam.cwiseMax(precision_floor);
    LaplaceMode lm;
    lm.location = m.theta;
    lm.covariance = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    lm.covariance = 0.5 * (lm.covariance + lm.covariance.transpose());
    lm.peak_log_kernel = -m.value;
    lm.at_boundary = m.at_boundary;
    const double log_det_cov = -lam.array().log().sum();
    log_w.push_back(lm.peak_log_kernel + 0.5 * d * kLog2Pi + 0.5 * log_det_cov);
    comps.push_back(std::move(lm));
  }
  const double norm = log_sum_exp(log_w);
  std::vector<LaplaceMode> kept;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    comps[k].weight = std::exp(log_w[k] - norm);
    if (comps[k].weight >= cfg.weight_floor) kept.push_back(std::move(comps[k]));
  }
  return GaussianMixture(std::move(kept));
}

inline GaussianMixture fit_laplace_mixture(const PosteriorProblem& prob,
                                           std::span<const MapResult> modes,
                                           const SearchConfig& cfg) {
  const auto target = PosteriorTarget::calibrated(prob);
  return fit_laplace_mixture(target, modes, cfg);
}

}  // namespace mmeig

#endif  // MMEIG_MODE_ATLAS_HPP
