#ifndef MMEIG_MODEL_HPP
#define MMEIG_MODEL_HPP

#include <algorithm>
#include <functional>
#include <string>
#include <utility>

#include <boost/math/distributions/normal.hpp>

#include "core.hpp"
#include "random.hpp"

namespace mmeig {

//! Experimental design parameters. Models with a structural design (e.g. a
//! sensor selection baked into the model) use an empty design.
struct DesignPoint {
  Vector values;

  DesignPoint() = default;
  explicit DesignPoint(Vector v) : values(std::move(v)) {}
  static DesignPoint scalar(double xi) { return DesignPoint(Vector::Constant(1, xi)); }

  Eigen::Index size() const { return values.size(); }
  double operator[](Eigen::Index i) const { return values[i]; }
};

/*!
 * Deterministic map g(theta, xi) from parameters to one noise-free replicate.
 * The jacobian is optional; without it central finite differences are used.
 */
class ForwardModel {
 public:
  using EvaluateFn = std::function<Vector(const Vector&, const DesignPoint&)>;
  using JacobianFn = std::function<Matrix(const Vector&, const DesignPoint&)>;

  ForwardModel(std::string name, int param_dim, int obs_dim, int design_dim,
               EvaluateFn evaluate, JacobianFn jacobian = {})
      : name_(std::move(name)),
        d_(param_dim),
        d_m_(obs_dim),
        design_dim_(design_dim),
        evaluate_(std::move(evaluate)),
        jacobian_(std::move(jacobian)) {
    if (d_ < 1 || d_m_ < 1 || design_dim_ < 0)
      throw DomainError("ForwardModel '" + name_ + "': invalid dimensions");
    if (!evaluate_) throw DomainError("ForwardModel '" + name_ + "': missing evaluate");
  }

  const std::string& name() const { return name_; }
  int param_dim() const { return d_; }
  int obs_dim() const { return d_m_; }
  int design_dim() const { return design_dim_; }
  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian_); }

  Vector evaluate(const Vector& theta, const DesignPoint& xi) const {
    check_design(xi);
    return evaluate_(theta, xi);
  }

  Matrix jacobian(const Vector& theta, const DesignPoint& xi) const {
    check_design(xi);
    if (jacobian_) return jacobian_(theta, xi);
    return finite_difference_jacobian(theta, xi);
  }

  //! Central differences with relative step 1e-5 * max(1, |theta_i|).
  Matrix finite_difference_jacobian(const Vector& theta, const DesignPoint& xi) const {
    Matrix jac(d_m_, d_);
    Vector probe = theta;
    for (int i = 0; i < d_; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
      probe[i] = theta[i] + h;
      const Vector fwd = evaluate_(probe, xi);
      probe[i] = theta[i] - h;
      const Vector bwd = evaluate_(probe, xi);
      probe[i] = theta[i];
      jac.col(i) = (fwd - bwd) / (2.0 * h);
    }
    return jac;
  }

 private:
  void check_design(const DesignPoint& xi) const {
    if (xi.size() != design_dim_)
      throw DomainError("ForwardModel '" + name_ + "': design has dimension " +
                        std::to_string(xi.size()) + ", expected " +
                        std::to_string(design_dim_));
    if (!xi.values.allFinite())
      throw DomainError("ForwardModel '" + name_ + "': non-finite design point");
  }

  std::string name_;
  int d_;
  int d_m_;
  int design_dim_;
  EvaluateFn evaluate_;
  JacobianFn jacobian_;
};

/*!
 * Independent prior over the parameters: either per-dimension uniform on
 * [lower, upper] or per-dimension Gaussian N(mean, variance).
 */
class Prior {
 public:
  enum class Kind { uniform, gaussian };

  static Prior uniform(Vector lower, Vector upper) {
    if (lower.size() != upper.size() || lower.size() == 0)
      throw DomainError("uniform prior: bound dimensions differ or are empty");
    if (!lower.allFinite() || !upper.allFinite() || (upper.array() < lower.array()).any())
      throw DomainError("uniform prior: need finite bounds with lower <= upper");
    return Prior(Kind::uniform, std::move(lower), std::move(upper));
  }

  static Prior uniform(int dim, double lower, double upper) {
    return uniform(Vector::Constant(dim, lower), Vector::Constant(dim, upper));
  }

  static Prior gaussian(Vector mean, Vector variance) {
    if (mean.size() != variance.size() || mean.size() == 0)
      throw DomainError("gaussian prior: mean/variance dimensions differ or are empty");
    if (!mean.allFinite() || !variance.allFinite() || (variance.array() <= 0.0).any())
      throw DomainError("gaussian prior: need finite mean and positive variance");
    return Prior(Kind::gaussian, std::move(mean), std::move(variance));
  }

  static Prior gaussian(int dim, double mean, double variance) {
    return gaussian(Vector::Constant(dim, mean), Vector::Constant(dim, variance));
  }

  Kind kind() const { return kind_; }
  bool is_uniform() const { return kind_ == Kind::uniform; }
  int dim() const { return static_cast<int>(a_.size()); }

  // uniform: lower/upper; gaussian: mean/variance
  const Vector& lower() const { return a_; }
  const Vector& upper() const { return b_; }
  const Vector& mean() const { return a_; }
  const Vector& variance() const { return b_; }

  bool in_support(const Vector& theta) const {
    if (!theta.allFinite()) return false;
    if (kind_ == Kind::gaussian) return true;
    return (theta.array() >= a_.array()).all() && (theta.array() <= b_.array()).all();
  }

  double log_density(const Vector& theta) const {
    check_dim(theta);
    if (kind_ == Kind::uniform) {
      if (!in_support(theta)) return -kInf;
      return -(b_ - a_).array().log().sum();
    }
    const auto z2 = (theta - a_).array().square() / b_.array();
    return -0.5 * (z2.sum() + b_.array().log().sum() + dim() * kLog2Pi);
  }

  //! Gradient of the log-density (zero inside a uniform support).
  Vector grad_log_density(const Vector& theta) const {
    if (kind_ == Kind::uniform) return Vector::Zero(dim());
    return -((theta - a_).array() / b_.array()).matrix();
  }

  //! Hessian of -log p; zero for uniform, diag(1/variance) for Gaussian.
  Matrix neg_log_hessian() const {
    if (kind_ == Kind::uniform) return Matrix::Zero(dim(), dim());
    return b_.cwiseInverse().asDiagonal();
  }

  bool has_curvature() const { return kind_ == Kind::gaussian; }

  //! Marginal quantile of coordinate i at probability u in (0, 1).
  double quantile(int i, double u) const {
    if (kind_ == Kind::uniform) return a_[i] + (b_[i] - a_[i]) * u;
    const boost::math::normal_distribution<double> nd(a_[i], std::sqrt(b_[i]));
    return boost::math::quantile(nd, std::clamp(u, 1e-300, 1.0 - 1e-16));
  }

  Vector sample(RandomStream& rng) const {
    Vector theta(dim());
    for (int i = 0; i < dim(); ++i) {
      if (kind_ == Kind::uniform)
        theta[i] = a_[i] == b_[i] ? a_[i] : rng.uniform(a_[i], b_[i]);
      else
        theta[i] = a_[i] + std::sqrt(b_[i]) * rng.normal();
    }
    return theta;
  }

  //! Length scale of the support: Euclidean diameter for uniform priors, six
  //! times the largest standard deviation for Gaussian priors.
  double scale() const {
    if (kind_ == Kind::uniform) return (b_ - a_).norm();
    return 6.0 * std::sqrt(b_.maxCoeff());
  }

  //! Project onto the support (identity for Gaussian priors).
  Vector project(const Vector& theta) const {
    if (kind_ == Kind::gaussian) return theta;
    return theta.cwiseMax(a_).cwiseMin(b_);
  }

  void check_dim(const Vector& theta) const {
    if (theta.size() != dim())
      throw DomainError("prior: parameter has dimension " + std::to_string(theta.size()) +
                        ", expected " + std::to_string(dim()));
  }

 private:
  Prior(Kind k, Vector a, Vector b) : kind_(k), a_(std::move(a)), b_(std::move(b)) {}

  Kind kind_;
  Vector a_;
  Vector b_;
};

/*!
 * Homoscedastic Gaussian measurement noise, Sigma_e = sigma_e^2 I. In the
 * uncalibrated mode sigma_e itself is uniform on [sigma_lo, sigma_hi] and is
 * marginalized with a fixed number of samples.
 */
class NoiseModel {
 public:
  enum class Mode { calibrated, uncalibrated };

  static NoiseModel calibrated(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
      throw DomainError("noise: sigma_e^2 must be positive and finite");
    NoiseModel n;
    n.mode_ = Mode::calibrated;
    n.sigma2_ = sigma2;
    return n;
  }

  //! A point mass (sigma_lo == sigma_hi) is accepted as the degenerate case.
  static NoiseModel uncalibrated(double sigma_lo, double sigma_hi, int marginal_samples) {
    if (!(sigma_lo > 0.0) || !(sigma_hi >= sigma_lo) || !std::isfinite(sigma_hi))
      throw DomainError("noise: uncalibrated bounds must satisfy 0 < lo <= hi");
    if (marginal_samples < 1) throw DomainError("noise: marginal sample count must be >= 1");
    NoiseModel n;
    n.mode_ = Mode::uncalibrated;
    n.lo_ = sigma_lo;
    n.hi_ = sigma_hi;
    n.samples_ = marginal_samples;
    return n;
  }

  Mode mode() const { return mode_; }
  bool is_calibrated() const { return mode_ == Mode::calibrated; }
  double sigma2() const { return sigma2_; }
  double sigma() const { return std::sqrt(sigma2_); }
  double sigma_lower() const { return lo_; }
  double sigma_upper() const { return hi_; }
  int marginal_samples() const { return samples_; }

  double sample_sigma(RandomStream& rng) const {
    if (is_calibrated()) return sigma();
    return lo_ == hi_ ? lo_ : rng.uniform(lo_, hi_);
  }

 private:
  NoiseModel() = default;
  Mode mode_ = Mode::calibrated;
  double sigma2_ = 1.0;
  double lo_ = 0.0;
  double hi_ = 0.0;
  int samples_ = 1;
};

//! Stacked replicates, one row per replicate y_i.
struct ObservationSet {
  Matrix replicates;

  int m() const { return static_cast<int>(replicates.rows()); }
  int obs_dim() const { return static_cast<int>(replicates.cols()); }
};

inline Vector sample_prior(const Prior& prior, RandomStream& rng) { return prior.sample(rng); }

inline double log_prior_density(const Prior& prior, const Vector& theta) {
  return prior.log_density(theta);
}

inline Vector evaluate_checked(const ForwardModel& model, const Vector& theta,
                               const DesignPoint& xi) {
  Vector g = model.evaluate(theta, xi);
  if (g.size() != model.obs_dim())
    throw EvaluationError("model '" + model.name() + "' returned wrong output size at theta=" +
                          format_vector(theta));
  if (!g.allFinite())
    throw EvaluationError("model '" + model.name() + "' returned non-finite output at theta=" +
                          format_vector(theta));
  return g;
}

//! y_i = g(theta, xi) + eps_i with eps_i ~ N(0, sigma_e^2 I), i = 1..m.
inline ObservationSet simulate_observations(const ForwardModel& model, const Vector& theta,
                                            const DesignPoint& xi, double sigma_e, int m,
                                            RandomStream& rng) {
  if (m < 1) throw DomainError("simulate_observations: m must be >= 1");
  if (!(sigma_e >= 0.0)) throw DomainError("simulate_observations: sigma_e must be >= 0");
  const Vector g = evaluate_checked(model, theta, xi);
  ObservationSet obs;
  obs.replicates.resize(m, model.obs_dim());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < model.obs_dim(); ++j) obs.replicates(i, j) = g[j] + sigma_e * rng.normal();
  return obs;
}

inline ObservationSet simulate_observations(const ForwardModel& model, const Vector& theta,
                                            const DesignPoint& xi, const NoiseModel& noise, int m,
                                            RandomStream& rng) {
  if (!noise.is_calibrated())
    throw DomainError("simulate_observations: uncalibrated noise needs an explicit sigma_e draw");
  return simulate_observations(model, theta, xi, noise.sigma(), m, rng);
}

}  // namespace mmeig

#endif  // MMEIG_MODEL_HPP
