#ifndef MMEIG_CORE_HPP
#define MMEIG_CORE_HPP

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mmeig {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

//! Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

//! Forward model produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

//! Curvature matrix has no usable positive-definite part.
class SingularityError : public Error {
 public:
  using Error::Error;
};

//! Optimizer start point has infinite objective.
class StartRejectedError : public Error {
 public:
  using Error::Error;
};

//! No multistart run converged.
class SearchFailureError : public Error {
 public:
  SearchFailureError(const std::string& what, int runs, int converged)
      : Error(what), runs_(runs), converged_(converged) {}
  int runs() const { return runs_; }
  int converged() const { return converged_; }

 private:
  int runs_;
  int converged_;
};

//! Estimator-level failure (too many skipped outer samples, degenerate pilot).
class EstimatorError : public Error {
 public:
  using Error::Error;
};

//! Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os.precision(10);
  os << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << v[i];
  }
  os << ')';
  return os.str();
}

//! log(sum(exp(x))) over a span; -inf for an empty span or all -inf terms.
inline double log_sum_exp(std::span<const double> x) {
  double hi = -kInf;
  for (double v : x) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

inline double log_mean_exp(std::span<const double> x) {
  if (x.empty()) return -kInf;
  return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

//! Streaming log-sum-exp accumulator.
class LogSumExp {
 public:
  void add(double v) {
    if (v == -kInf) return;
    if (v <= hi_) {
      acc_ += std::exp(v - hi_);
    } else {
      acc_ = acc_ * std::exp(hi_ - v) + 1.0;
      hi_ = v;
    }
  }
  double value() const { return acc_ > 0.0 ? hi_ + std::log(acc_) : -kInf; }

 private:
  double hi_ = -kInf;
  double acc_ = 0.0;
};

}  // namespace mmeig

#endif  // MMEIG_CORE_HPP
