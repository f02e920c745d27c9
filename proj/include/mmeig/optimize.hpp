#ifndef MMEIG_OPTIMIZE_HPP
#define MMEIG_OPTIMIZE_HPP

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "core.hpp"

namespace mmeig {

enum class OptimizerKind { quasi_newton, nelder_mead };

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::quasi_newton ? "quasi-newton-fd" : "nelder-mead";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "quasi-newton-fd" || s == "quasi-newton") return OptimizerKind::quasi_newton;
  if (s == "nelder-mead") return OptimizerKind::nelder_mead;
  throw ConfigError("unknown optimizer '" + s + "' (valid: quasi-newton-fd, nelder-mead)");
}

//! Settings of the multistart mode search.
struct SearchConfig {
  int n = 20;  // optimization starts
  OptimizerKind optimizer = OptimizerKind::quasi_newton;
  int max_iters = 500;
  double gradient_tolerance = 1e-6;  // on |projected grad|_inf / max(1, |f|)
  double dedup_radius = 1e-3;        // relative to the prior scale
  double weight_floor = 1e-12;
  bool nelder_mead_fallback = true;
  int lhs_iterations = 1;  // >1 keeps the maximin design among this many Latin hypercubes

  void validate() const {
    if (n < 1) throw ConfigError("search.n must be >= 1");
    if (max_iters < 1) throw ConfigError("search.max_iters must be >= 1");
    if (lhs_iterations < 1) throw ConfigError("search.lhs_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0)) throw ConfigError("search.gradient_tolerance must be > 0");
    if (!(dedup_radius > 0.0)) throw ConfigError("search.dedup_radius must be > 0");
    if (!(weight_floor >= 0.0) || weight_floor >= 1.0)
      throw ConfigError("search.weight_floor must be in [0, 1)");
  }
};

//! Closed box the iterates are projected onto.
struct Box {
  Vector lower;
  Vector upper;

  Vector project(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

//! Scalar objective with an optional analytic gradient.
struct Objective {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

struct MapResult {
  Vector theta;
  double value = kInf;
  bool converged = false;
  bool at_boundary = false;
  int iterations = 0;
  int evaluations = 0;
};

namespace detail {

class Minimizer {
 public:
  Minimizer(const Objective& obj, const SearchConfig& cfg, const std::optional<Box>& box,
            double max_step)
      : obj_(obj), cfg_(cfg), box_(box), max_step_(max_step) {}

  double value(const Vector& x) {
    ++evaluations_;
    const double f = obj_.value(x);
    return std::isnan(f) ? kInf : f;
  }

  Vector gradient(const Vector& x) {
    if (obj_.gradient) {
      ++evaluations_;
      return obj_.gradient(x);
    }
    const Eigen::Index d = x.size();
    Vector g(d);
    Vector probe = x;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
      double hi_x = x[i] + h, lo_x = x[i] - h;
      if (box_) {
        hi_x = std::min(hi_x, box_->upper[i]);
        lo_x = std::max(lo_x, box_->lower[i]);
      }
      probe[i] = hi_x;
      const double fh = value(probe);
      probe[i] = lo_x;
      const double fl = value(probe);
      probe[i] = x[i];
      g[i] = (hi_x > lo_x) ? (fh - fl) / (hi_x - lo_x) : 0.0;
    }
    return g;
  }

  Vector project(const Vector& x) const { return box_ ? box_->project(x) : x; }

  // Components pushing against an active bound are zeroed.
  Vector projected_gradient(const Vector& x, const Vector& g, bool* active = nullptr) const {
    Vector pg = g;
    bool any = false;
    if (box_) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (pushes_out(x, g, i)) {
          pg[i] = 0.0;
          any = true;
        }
      }
    }
    if (active) *active = any;
    return pg;
  }

  bool small_gradient(const Vector& pg, double f) const {
    return pg.lpNorm<Eigen::Infinity>() <= cfg_.gradient_tolerance * std::max(1.0, std::abs(f));
  }

  MapResult quasi_newton(Vector x) {
    MapResult res;
    double f = value(x);
    Vector g = gradient(x);
    const Eigen::Index d = x.size();
    Matrix hinv = Matrix::Identity(d, d);
    bool identity = true;
    bool scaled = false;
    int it = 0;
    for (; it < cfg_.max_iters; ++it) {
      bool active = false;
      const Vector pg = projected_gradient(x, g, &active);
      if (!pg.allFinite()) break;
      if (small_gradient(pg, f)) {
        res.converged = true;
        res.at_boundary = active;
        break;
      }
      Vector p = active ? reduced_direction(hinv, x, g) : Vector(-(hinv * g));
      block_active(x, p);
      if (!(g.dot(p) < 0.0)) {
        hinv.setIdentity();
        identity = true;
        p = -pg;
      }
      const double len = p.norm();
      if (len > max_step_) p *= max_step_ / len;

      Vector xn;
      double fn = kInf;
      bool accepted = false;
      double t = 1.0;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        xn = project(x + t * p);
        fn = value(xn);
        if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(xn - x)) {
          accepted = true;
          break;
        }
      }
      if (!accepted || xn == x) {
        if (!identity) {
          hinv.setIdentity();
          identity = true;
          continue;
        }
        break;  // stalled
      }
      const Vector gn = gradient(xn);
      const Vector s = xn - x;
      const Vector y = gn - g;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm() && y.allFinite()) {
        if (!scaled) {
          hinv *= sy / y.squaredNorm();
          scaled = true;
        }
        const double rho = 1.0 / sy;
        const Matrix left = Matrix::Identity(d, d) - rho * s * y.transpose();
        hinv = left * hinv * left.transpose() + rho * s * s.transpose();
        identity = false;
      }
      x = xn;
      f = fn;
      g = gn;
    }
    if (!res.converged) {
      bool active = false;
      const Vector pg = projected_gradient(x, g, &active);
      res.converged = pg.allFinite() && small_gradient(pg, f);
      res.at_boundary = active;
    }
    res.theta = std::move(x);
    res.value = f;
    res.iterations = it;
    return res;
  }

  MapResult nelder_mead(const Vector& start, double simplex_scale) {
    const Eigen::Index d = start.size();
    std::vector<Vector> pts(d + 1, start);
    std::vector<double> fv(d + 1);
    for (Eigen::Index i = 0; i < d; ++i) {
      pts[i + 1][i] += simplex_scale;
      if (box_ && pts[i + 1][i] > box_->upper[i]) pts[i + 1][i] = start[i] - simplex_scale;
    }
    for (Eigen::Index i = 0; i <= d; ++i) {
      pts[i] = project(pts[i]);
      fv[i] = value(pts[i]);
    }
    std::vector<std::size_t> order(d + 1);
    int it = 0;
    const int max_iters = cfg_.max_iters * static_cast<int>(d + 1) * 4;
    for (; it < max_iters; ++it) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
      const std::size_t best = order.front(), worst = order.back(), second = order[d - 1];
      double diam = 0.0;
      for (const auto& p : pts) diam = std::max(diam, (p - pts[best]).lpNorm<Eigen::Infinity>());
      if (std::abs(fv[worst] - fv[best]) <= 1e-14 * (1.0 + std::abs(fv[best])) &&
          diam <= 1e-10 * std::max(1.0, simplex_scale))
        break;
      Vector centroid = Vector::Zero(d);
      for (std::size_t i = 0; i <= static_cast<std::size_t>(d); ++i)
        if (i != worst) centroid += pts[i];
      centroid /= static_cast<double>(d);
      const Vector xr = project(centroid + (centroid - pts[worst]));
      const double fr = value(xr);
      if (fr < fv[best]) {
        const Vector xe = project(centroid + 2.0 * (centroid - pts[worst]));
        const double fe = value(xe);
        if (fe < fr) {
          pts[worst] = xe;
          fv[worst] = fe;
        } else {
          pts[worst] = xr;
          fv[worst] = fr;
        }
      } else if (fr < fv[second]) {
        pts[worst] = xr;
        fv[worst] = fr;
      } else {
        const bool outside = fr < fv[worst];
        const Vector xc = project(outside ? Vector(centroid + 0.5 * (xr - centroid))
                                          : Vector(centroid + 0.5 * (pts[worst] - centroid)));
        const double fc = value(xc);
        if (fc < std::min(fr, fv[worst])) {
          pts[worst] = xc;
          fv[worst] = fc;
        } else {
          for (std::size_t i = 0; i <= static_cast<std::size_t>(d); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            fv[i] = value(pts[i]);
          }
        }
      }
    }
    const auto best_it = std::min_element(fv.begin(), fv.end());
    MapResult res;
    res.theta = pts[static_cast<std::size_t>(best_it - fv.begin())];
    res.value = *best_it;
    res.iterations = it;
    if (std::isfinite(res.value)) {
      bool active = false;
      const Vector pg = projected_gradient(res.theta, gradient(res.theta), &active);
      res.converged = pg.allFinite() && small_gradient(pg, res.value);
      res.at_boundary = active;
    }
    return res;
  }

  int evaluations() const { return evaluations_; }

 private:
  bool pushes_out(const Vector& x, const Vector& g, Eigen::Index i) const {
    return (x[i] <= box_->lower[i] && g[i] > 0.0) || (x[i] >= box_->upper[i] && g[i] < 0.0);
  }

  // Quasi-Newton step on the free coordinates: the inverse of the free block
  // of the Hessian is the Schur complement of the active block in hinv.
  Vector reduced_direction(const Matrix& hinv, const Vector& x, const Vector& g) const {
    std::vector<Eigen::Index> free, fixed;
    for (Eigen::Index i = 0; i < x.size(); ++i) (pushes_out(x, g, i) ? fixed : free).push_back(i);
    Vector p = Vector::Zero(x.size());
    if (free.empty()) return p;
    Matrix reduced = hinv(free, free);
    if (!fixed.empty()) {
      const Eigen::LDLT<Matrix> aa(hinv(fixed, fixed));
      reduced -= hinv(free, fixed) * aa.solve(Matrix(hinv(fixed, free)));
    }
    p(free) = -(reduced * g(free));
    return p;
  }

  void block_active(const Vector& x, Vector& p) const {
    if (!box_) return;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if ((x[i] <= box_->lower[i] && p[i] < 0.0) || (x[i] >= box_->upper[i] && p[i] > 0.0)) p[i] = 0.0;
  }

  const Objective& obj_;
  const SearchConfig& cfg_;
  const std::optional<Box>& box_;
  double max_step_;
  int evaluations_ = 0;
};

}  // namespace detail

/*!
 * Local minimization of an objective from one start. The default is a
 * projected BFGS with backtracking line search: analytic gradients are used
 * when provided, central differences otherwise. Iterates never leave the box.
 * Nelder-Mead is used either on request or as a fallback after a stall.
 *
 * `max_step` caps the length of a single step; `scale` sizes the initial
 * Nelder-Mead simplex.
 */
inline MapResult find_map(const Objective& objective, const Vector& start, const SearchConfig& cfg,
                          const std::optional<Box>& box = std::nullopt, double scale = 1.0) {
  detail::Minimizer mz(objective, cfg, box, std::max(scale, 1e-12));
  const Vector x0 = box ? box->project(start) : start;
  const double f0 = objective.value(x0);
  if (!std::isfinite(f0))
    throw StartRejectedError("find_map: objective is not finite at start " + format_vector(x0));
  MapResult res;
  if (cfg.optimizer == OptimizerKind::nelder_mead) {
    res = mz.nelder_mead(x0, 0.05 * scale);
  } else {
    res = mz.quasi_newton(x0);
    if (!res.converged && cfg.nelder_mead_fallback) {
      MapResult nm = mz.nelder_mead(res.theta, 1e-3 * scale);
      if (nm.converged || nm.value < res.value) {
        nm.iterations += res.iterations;
        res = std::move(nm);
      }
    }
  }
  res.evaluations = mz.evaluations() + 1;
  return res;
}

}  // namespace mmeig

#endif  // MMEIG_OPTIMIZE_HPP
