#ifndef MMEIG_POSTERIOR_HPP
#define MMEIG_POSTERIOR_HPP

#include <vector>

#include "core.hpp"
#include "model.hpp"

namespace mmeig {

/*!
 * Everything needed to evaluate p(theta | ybar, xi) up to the evidence. Holds
 * references to the model and prior; the referenced objects must outlive it.
 */
class PosteriorProblem {
 public:
  PosteriorProblem(const ForwardModel& model, const Prior& prior, const NoiseModel& noise,
                   DesignPoint design, ObservationSet data)
      : model_(&model),
        prior_(&prior),
        noise_(&noise),
        design_(std::move(design)),
        data_(std::move(data)) {
    if (data_.obs_dim() != model.obs_dim())
      throw DomainError("posterior: data has " + std::to_string(data_.obs_dim()) +
                        " columns, model expects " + std::to_string(model.obs_dim()));
    if (prior.dim() != model.param_dim())
      throw DomainError("posterior: prior dimension " + std::to_string(prior.dim()) +
                        " does not match model dimension " + std::to_string(model.param_dim()));
    if (data_.m() < 1) throw DomainError("posterior: need at least one replicate");
    if (!data_.replicates.allFinite()) throw DomainError("posterior: non-finite observations");
  }

  const ForwardModel& model() const { return *model_; }
  const Prior& prior() const { return *prior_; }
  const NoiseModel& noise() const { return *noise_; }
  const DesignPoint& design() const { return design_; }
  const ObservationSet& data() const { return data_; }
  int dim() const { return model_->param_dim(); }

 private:
  const ForwardModel* model_;
  const Prior* prior_;
  const NoiseModel* noise_;
  DesignPoint design_;
  ObservationSet data_;
};

namespace detail {

struct Residuals {
  double squared_norm = 0.0;  // sum_i |y_i - g|^2
  Vector sum;                 // sum_i (y_i - g)
};

inline Residuals residuals(const ObservationSet& data, const Vector& g) {
  Residuals r;
  r.sum = Vector::Zero(g.size());
  for (int i = 0; i < data.m(); ++i) {
    const Vector ri = data.replicates.row(i).transpose() - g;
    r.squared_norm += ri.squaredNorm();
    r.sum += ri;
  }
  return r;
}

inline double gaussian_log_likelihood(double squared_norm, int n_obs, double sigma) {
  const double s2 = sigma * sigma;
  return -squared_norm / (2.0 * s2) - 0.5 * n_obs * (kLog2Pi + std::log(s2));
}

struct SpdRepair {
  Matrix matrix;
  bool clamped = false;
};

//! Symmetrize and clamp eigenvalues below 1e-10 * trace / d.
inline SpdRepair repair_spd(const Matrix& h, const Vector& theta) {
  Matrix sym = 0.5 * (h + h.transpose());
  const double trace = sym.trace();
  if (!(trace > 0.0) || !std::isfinite(trace))
    throw SingularityError("curvature matrix has no positive part at theta=" + format_vector(theta));
  const double floor = 1e-10 * trace / static_cast<double>(sym.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  Vector lambda = eig.eigenvalues();
  SpdRepair out;
  if (lambda.minCoeff() >= floor) {
    out.matrix = std::move(sym);
    return out;
  }
  out.clamped = true;
  lambda = lambda.cwiseMax(floor);
  out.matrix = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
  return out;
}

}  // namespace detail

//! sum_i [ -|y_i - g|^2 / (2 sigma^2) - (d_m/2) log(2 pi sigma^2) ], in log domain.
inline double log_likelihood(const PosteriorProblem& prob, const Vector& theta, double sigma_e) {
  if (!(sigma_e > 0.0)) throw DomainError("log_likelihood: sigma_e must be positive");
  const Vector g = evaluate_checked(prob.model(), theta, prob.design());
  const auto r = detail::residuals(prob.data(), g);
  return detail::gaussian_log_likelihood(r.squared_norm, prob.data().m() * prob.model().obs_dim(),
                                         sigma_e);
}

//! -log p(ybar|theta) - log p(theta) for calibrated noise; the evidence is omitted.
inline double neg_log_posterior(const PosteriorProblem& prob, const Vector& theta) {
  if (!prob.prior().in_support(theta)) return kInf;
  if (!prob.noise().is_calibrated())
    throw DomainError("neg_log_posterior: needs calibrated noise; use the marginal form");
  return -log_likelihood(prob, theta, prob.noise().sigma()) - prob.prior().log_density(theta);
}

//! -log((1/L) sum_l p(ybar|theta, sigma_l)) - log p(theta), via log-sum-exp.
inline double marginal_log_posterior_uncalibrated(const PosteriorProblem& prob, const Vector& theta,
                                                  std::span<const double> sigma_samples) {
  if (sigma_samples.empty())
    throw DomainError("marginal_log_posterior_uncalibrated: empty sigma sample set");
  if (!prob.prior().in_support(theta)) return kInf;
  const Vector g = evaluate_checked(prob.model(), theta, prob.design());
  const auto r = detail::residuals(prob.data(), g);
  const int n_obs = prob.data().m() * prob.model().obs_dim();
  LogSumExp acc;
  for (double s : sigma_samples) {
    if (!(s > 0.0)) throw DomainError("marginal_log_posterior_uncalibrated: sigma must be positive");
    acc.add(detail::gaussian_log_likelihood(r.squared_norm, n_obs, s));
  }
  const double log_mean = acc.value() - std::log(static_cast<double>(sigma_samples.size()));
  return -log_mean - prob.prior().log_density(theta);
}

/*!
 * m J^T J / sigma^2 + H_prior, symmetrized, with eigenvalues clamped below at
 * 1e-10 * trace / d.
 */
inline Matrix gauss_newton_hessian(const PosteriorProblem& prob, const Vector& theta,
                                   double sigma_e) {
  if (!(sigma_e > 0.0)) throw DomainError("gauss_newton_hessian: sigma_e must be positive");
  const Matrix jac = prob.model().jacobian(theta, prob.design());
  Matrix h = prob.data().m() * (jac.transpose() * jac) / (sigma_e * sigma_e);
  h += prob.prior().neg_log_hessian();
  return detail::repair_spd(h, theta).matrix;
}

/*!
 * The posterior as an optimization target. For calibrated noise the sigma set
 * is {sigma_e}; for uncalibrated noise it is the fixed marginalization sample
 * set of one outer sample, so the target is a deterministic function.
 */
class PosteriorTarget {
 public:
  PosteriorTarget(const PosteriorProblem& prob, std::vector<double> sigmas)
      : prob_(&prob), sigmas_(std::move(sigmas)) {
    if (sigmas_.empty()) throw DomainError("PosteriorTarget: empty sigma set");
    for (double s : sigmas_)
      if (!(s > 0.0)) throw DomainError("PosteriorTarget: sigma must be positive");
    n_obs_ = prob.data().m() * prob.model().obs_dim();
  }

  static PosteriorTarget calibrated(const PosteriorProblem& prob) {
    return PosteriorTarget(prob, {prob.noise().sigma()});
  }

  const PosteriorProblem& problem() const { return *prob_; }
  const std::vector<double>& sigmas() const { return sigmas_; }
  int dim() const { return prob_->dim(); }

  //! log p(ybar | theta), averaged over the sigma set in linear domain.
  double log_likelihood(const Vector& theta) const {
    const Vector g = evaluate_checked(prob_->model(), theta, prob_->design());
    return log_likelihood_from(detail::residuals(prob_->data(), g).squared_norm);
  }

  double neg_log_posterior(const Vector& theta) const {
    if (!prob_->prior().in_support(theta)) return kInf;
    return -log_likelihood(theta) - prob_->prior().log_density(theta);
  }

  //! Gradient of the smooth extension of -log posterior (ignores the support).
  Vector gradient(const Vector& theta) const {
    const Vector g = evaluate_checked(prob_->model(), theta, prob_->design());
    const auto r = detail::residuals(prob_->data(), g);
    const Matrix jac = prob_->model().jacobian(theta, prob_->design());
    const double inv_s2 = effective_inverse_variance(r.squared_norm);
    return -inv_s2 * (jac.transpose() * r.sum) - prob_->prior().grad_log_density(theta);
  }

  struct Curvature {
    Matrix hessian;
    bool clamped = false;
  };

  //! Gauss-Newton curvature; sigma-set responsibilities weight 1/sigma_l^2.
  Curvature gauss_newton(const Vector& theta) const {
    const Vector g = evaluate_checked(prob_->model(), theta, prob_->design());
    const double sq = detail::residuals(prob_->data(), g).squared_norm;
    const Matrix jac = prob_->model().jacobian(theta, prob_->design());
    Matrix h = prob_->data().m() * effective_inverse_variance(sq) * (jac.transpose() * jac);
    h += prob_->prior().neg_log_hessian();
    auto rep = detail::repair_spd(h, theta);
    return {std::move(rep.matrix), rep.clamped};
  }

  //! Central-difference Hessian of the smooth extension, from the gradient.
  Matrix finite_difference_hessian(const Vector& theta) const {
    const int d = dim();
    Matrix h(d, d);
    Vector probe = theta;
    for (int i = 0; i < d; ++i) {
      const double step = 1e-5 * std::max(1.0, std::abs(theta[i]));
      probe[i] = theta[i] + step;
      const Vector fwd = gradient(probe);
      probe[i] = theta[i] - step;
      const Vector bwd = gradient(probe);
      probe[i] = theta[i];
      h.col(i) = (fwd - bwd) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
  }

 private:
  double log_likelihood_from(double squared_norm) const {
    if (sigmas_.size() == 1) return detail::gaussian_log_likelihood(squared_norm, n_obs_, sigmas_[0]);
    LogSumExp acc;
    for (double s : sigmas_) acc.add(detail::gaussian_log_likelihood(squared_norm, n_obs_, s));
    return acc.value() - std::log(static_cast<double>(sigmas_.size()));
  }

  // sum_l w_l / sigma_l^2 with w_l the normalized per-sigma likelihoods.
  double effective_inverse_variance(double squared_norm) const {
    if (sigmas_.size() == 1) return 1.0 / (sigmas_[0] * sigmas_[0]);
    std::vector<double> logw(sigmas_.size());
    for (std::size_t l = 0; l < sigmas_.size(); ++l)
      logw[l] = detail::gaussian_log_likelihood(squared_norm, n_obs_, sigmas_[l]);
    const double norm = log_sum_exp(logw);
    double acc = 0.0;
    for (std::size_t l = 0; l < sigmas_.size(); ++l)
      acc += std::exp(logw[l] - norm) / (sigmas_[l] * sigmas_[l]);
    return acc;
  }

  const PosteriorProblem* prob_;
  std::vector<double> sigmas_;
  int n_obs_ = 0;
};

}  // namespace mmeig

#endif  // MMEIG_POSTERIOR_HPP
