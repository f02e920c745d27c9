#ifndef MMEIG_BENCHMARKS_HPP
#define MMEIG_BENCHMARKS_HPP

#include <algorithm>
#include <cstdio>
#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "estimators.hpp"
#include "model.hpp"

namespace mmeig {

//! A forward model together with its prior, noise model and nominal design.
struct ModelBundle {
  ForwardModel model;
  Prior prior;
  NoiseModel noise;
  DesignPoint design;
  std::optional<double> analytic_eig;  // set for the linear-Gaussian benchmark

  ExperimentSpec experiment(int replicates = 1, std::uint64_t seed = 0, int workers = 1) const {
    return ExperimentSpec{model, prior, noise, design, replicates, seed, workers};
  }
};

// ---------------------------------------------------------------------------
// Quadratic monomials: g = [xi th1^2, (1 - xi/2) th2^2, th3^2], th ~ U(-10, 10)^3

inline Vector quadratic_coefficients(double xi) {
  Vector c(3);
  c << xi, 1.0 - 0.5 * xi, 1.0;
  return c;
}

inline ForwardModel quadratic_forward_model() {
  auto eval = [](const Vector& th, const DesignPoint& d) -> Vector {
    const Vector c = quadratic_coefficients(d[0]);
    return c.cwiseProduct(th.cwiseAbs2());
  };
  auto jac = [](const Vector& th, const DesignPoint& d) -> Matrix {
    const Vector c = quadratic_coefficients(d[0]);
    return Matrix((2.0 * c.cwiseProduct(th)).asDiagonal());
  };
  return ForwardModel("quadratic", 3, 3, 1, eval, jac);
}

inline ModelBundle make_quadratic_model(double xi, double sigma2 = 4.0) {
  if (!std::isfinite(xi)) throw DomainError("make_quadratic_model: xi must be finite");
  return ModelBundle{quadratic_forward_model(), Prior::uniform(3, -10.0, 10.0),
                     NoiseModel::calibrated(sigma2), DesignPoint::scalar(xi), std::nullopt};
}

/*!
 * Exact minimizers of the quadratic-model negative log posterior under the
 * uniform prior. Each coordinate decouples: with mean datum ybar_j and
 * coefficient c_j the stationarity condition is theta = 0 or
 * c_j theta^2 = ybar_j, so the minima are +-sqrt(ybar_j / c_j) when that ratio
 * is positive and 0 otherwise. Results are clipped to [-10, 10].
 */
inline std::vector<Vector> quadratic_mode_oracle(const ObservationSet& data, double xi,
                                                 double /*sigma2*/) {
  if (data.m() < 1) throw DomainError("quadratic_mode_oracle: need at least one replicate");
  const Vector c = quadratic_coefficients(xi);
  const Vector ybar = data.replicates.colwise().mean().transpose();
  std::vector<std::vector<double>> options(3);
  for (int j = 0; j < 3; ++j) {
    const double ratio = c[j] != 0.0 ? ybar[j] / c[j] : 0.0;
    if (ratio > 0.0) {
      const double r = std::min(std::sqrt(ratio), 10.0);
      options[static_cast<std::size_t>(j)] = {r, -r};
    } else {
      options[static_cast<std::size_t>(j)] = {0.0};
    }
  }
  std::vector<Vector> modes;
  for (double a : options[0])
    for (double b : options[1])
      for (double e : options[2]) modes.push_back((Vector(3) << a, b, e).finished());
  return modes;
}

// ---------------------------------------------------------------------------
// Sensor networks

using SensorPair = std::pair<int, int>;  // 1-based sensor ids, first < second

/*!
 * Sensors on the plane; the unknown sensors' (x, z) coordinates are the
 * parameters, in the order of `unknown_sensors`. `pairs` enumerates the
 * candidate distance vector D and `measured` indexes the rows of the
 * selection matrix into it.
 */
struct SensorNetworkSpec {
  std::string name = "sensor";
  int n_sensors = 0;
  std::map<int, std::pair<double, double>> fixed_positions;
  std::vector<int> unknown_sensors;
  Prior prior = Prior::uniform(1, 0.0, 1.0);
  std::vector<SensorPair> pairs;
  std::vector<int> measured;
  double sigma2 = 1.0;

  int param_dim() const { return 2 * static_cast<int>(unknown_sensors.size()); }
  int measured_count() const { return static_cast<int>(measured.size()); }

  //! d_m x |D| 0/1 matrix with one 1 per row.
  Matrix selection_matrix() const {
    Matrix s = Matrix::Zero(static_cast<Eigen::Index>(measured.size()),
                            static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t r = 0; r < measured.size(); ++r) s(static_cast<Eigen::Index>(r), measured[r]) = 1.0;
    return s;
  }

  std::vector<SensorPair> measured_pairs() const {
    std::vector<SensorPair> out;
    for (int k : measured) out.push_back(pairs[static_cast<std::size_t>(k)]);
    return out;
  }

  SensorNetworkSpec with_measured(std::vector<int> subset) const {
    SensorNetworkSpec s = *this;
    s.measured = std::move(subset);
    return s;
  }

  void validate() const {
    if (n_sensors < 2) throw DomainError("sensor spec: need at least two sensors");
    if (prior.dim() != param_dim())
      throw DomainError("sensor spec: prior dimension " + std::to_string(prior.dim()) +
                        " does not match 2 x unknown sensors = " + std::to_string(param_dim()));
    std::vector<int> role(static_cast<std::size_t>(n_sensors) + 1, 0);
    for (int u : unknown_sensors) {
      if (u < 1 || u > n_sensors || role[static_cast<std::size_t>(u)])
        throw DomainError("sensor spec: bad unknown sensor id " + std::to_string(u));
      role[static_cast<std::size_t>(u)] = 1;
    }
    for (const auto& [id, pos] : fixed_positions) {
      if (id < 1 || id > n_sensors || role[static_cast<std::size_t>(id)])
        throw DomainError("sensor spec: bad fixed sensor id " + std::to_string(id));
      role[static_cast<std::size_t>(id)] = 2;
    }
    for (int i = 1; i <= n_sensors; ++i)
      if (!role[static_cast<std::size_t>(i)])
        throw DomainError("sensor spec: sensor " + std::to_string(i) + " is neither fixed nor unknown");
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [i, j] = pairs[k];
      if (i < 1 || j > n_sensors || i >= j) throw DomainError("sensor spec: pair ids must satisfy 1 <= i < j <= n");
      if (k > 0 && !(pairs[k - 1] < pairs[k]))
        throw DomainError("sensor spec: pairs must be listed in lexicographic order");
    }
    if (measured.empty() || measured.size() > pairs.size())
      throw DomainError("sensor spec: need 1 <= d_m <= |D| measured pairs");
    for (int k : measured)
      if (k < 0 || k >= static_cast<int>(pairs.size()))
        throw DomainError("sensor spec: measured pair index out of range");
    if (!(sigma2 > 0.0)) throw DomainError("sensor spec: sigma_e^2 must be positive");
  }
};

//! All pairs i < j of n sensors in lexicographic order, minus `excluded`.
inline std::vector<SensorPair> all_pairs(int n, const std::vector<SensorPair>& excluded = {}) {
  std::vector<SensorPair> out;
  for (int i = 1; i <= n; ++i)
    for (int j = i + 1; j <= n; ++j)
      if (std::find(excluded.begin(), excluded.end(), SensorPair{i, j}) == excluded.end())
        out.emplace_back(i, j);
  return out;
}

inline std::vector<int> pair_indices(const std::vector<SensorPair>& pairs,
                                     const std::vector<SensorPair>& wanted) {
  std::vector<int> idx;
  for (const auto& w : wanted) {
    const auto it = std::find(pairs.begin(), pairs.end(), w);
    if (it == pairs.end())
      throw DomainError("sensor spec: pair (" + std::to_string(w.first) + "," +
                        std::to_string(w.second) + ") is not in the distance vector");
    idx.push_back(static_cast<int>(it - pairs.begin()));
  }
  return idx;
}

//! Two unknown sensors in U(0,1)^2 and two fixed ones; four cross distances measured.
inline SensorNetworkSpec sensor4_spec() {
  SensorNetworkSpec s;
  s.name = "sensor4";
  s.n_sensors = 4;
  s.fixed_positions = {{3, {0.5, 0.3}}, {4, {0.3, 0.5}}};
  s.unknown_sensors = {1, 2};
  s.prior = Prior::uniform(4, 0.0, 1.0);
  s.pairs = all_pairs(4);
  s.measured = pair_indices(s.pairs, {{1, 3}, {1, 4}, {2, 3}, {2, 4}});
  s.sigma2 = 0.0005 * 0.0005;
  return s;
}

/*!
 * Four unknown sensors with N(0,1) coordinates and two fixed ones. D holds
 * the 14 distances that involve an unknown sensor; by default each unknown
 * sensor is measured against both fixed sensors. `sigma2` defaults to 0.16^2;
 * pass 0.16 for the alternative reading.
 */
inline SensorNetworkSpec sensor6_spec(double sigma2 = 0.16 * 0.16) {
  SensorNetworkSpec s;
  s.name = "sensor6";
  s.n_sensors = 6;
  s.fixed_positions = {{5, {0.5, 0.3}}, {6, {0.3, 0.7}}};
  s.unknown_sensors = {1, 2, 3, 4};
  s.prior = Prior::gaussian(8, 0.0, 1.0);
  s.pairs = all_pairs(6, {{5, 6}});
  s.measured = pair_indices(s.pairs, {{1, 5}, {1, 6}, {2, 5}, {2, 6}, {3, 5}, {3, 6}, {4, 5}, {4, 6}});
  s.sigma2 = sigma2;
  return s;
}

namespace detail {

struct SensorLayout {
  // For each measured pair: parameter offsets of both ends (-1 if fixed) and fixed coordinates.
  struct End {
    int offset = -1;
    double x = 0.0;
    double z = 0.0;
  };
  std::vector<std::pair<End, End>> rows;

  explicit SensorLayout(const SensorNetworkSpec& spec) {
    std::map<int, int> offset;
    for (std::size_t u = 0; u < spec.unknown_sensors.size(); ++u)
      offset[spec.unknown_sensors[u]] = 2 * static_cast<int>(u);
    auto end = [&](int id) {
      End e;
      if (auto it = offset.find(id); it != offset.end()) {
        e.offset = it->second;
      } else {
        const auto& p = spec.fixed_positions.at(id);
        e.x = p.first;
        e.z = p.second;
      }
      return e;
    };
    for (const auto& [i, j] : spec.measured_pairs()) rows.emplace_back(end(i), end(j));
  }

  static std::pair<double, double> position(const End& e, const Vector& th) {
    if (e.offset < 0) return {e.x, e.z};
    return {th[e.offset], th[e.offset + 1]};
  }
};

}  // namespace detail

//! Sensor model bundle; `floor_hits` counts distances raised to the 1e-12 floor.
struct SensorModel {
  ModelBundle bundle;
  SensorNetworkSpec spec;
  std::shared_ptr<std::atomic<long long>> floor_hits;
};

/*!
 * y = M D + eps with D_ij the Euclidean distance between sensors i and j.
 * Jacobian entries are (x_i - x_j) / D_ij and (z_i - z_j) / D_ij with opposite
 * signs on the two ends; D_ij is floored at 1e-12 when sensors coincide.
 */
inline SensorModel make_sensor_model(const SensorNetworkSpec& spec) {
  spec.validate();
  const auto layout = std::make_shared<const detail::SensorLayout>(spec);
  auto hits = std::make_shared<std::atomic<long long>>(0);
  const int d = spec.param_dim();
  const int dm = spec.measured_count();
  auto eval = [layout](const Vector& th, const DesignPoint&) -> Vector {
    Vector y(static_cast<Eigen::Index>(layout->rows.size()));
    for (std::size_t r = 0; r < layout->rows.size(); ++r) {
      const auto [xi, zi] = detail::SensorLayout::position(layout->rows[r].first, th);
      const auto [xj, zj] = detail::SensorLayout::position(layout->rows[r].second, th);
      y[static_cast<Eigen::Index>(r)] = std::hypot(xi - xj, zi - zj);
    }
    return y;
  };
  auto jac = [layout, hits, d](const Vector& th, const DesignPoint&) -> Matrix {
    Matrix j = Matrix::Zero(static_cast<Eigen::Index>(layout->rows.size()), d);
    for (std::size_t r = 0; r < layout->rows.size(); ++r) {
      const auto& [a, b] = layout->rows[r];
      const auto [xi, zi] = detail::SensorLayout::position(a, th);
      const auto [xj, zj] = detail::SensorLayout::position(b, th);
      double dist = std::hypot(xi - xj, zi - zj);
      if (dist < 1e-12) {
        dist = 1e-12;
        hits->fetch_add(1, std::memory_order_relaxed);
      }
      const double ux = (xi - xj) / dist, uz = (zi - zj) / dist;
      const auto row = static_cast<Eigen::Index>(r);
      if (a.offset >= 0) {
        j(row, a.offset) += ux;
        j(row, a.offset + 1) += uz;
      }
      if (b.offset >= 0) {
        j(row, b.offset) -= ux;
        j(row, b.offset + 1) -= uz;
      }
    }
    return j;
  };
  ForwardModel model(spec.name, d, dm, 0, eval, jac);
  return SensorModel{ModelBundle{std::move(model), spec.prior, NoiseModel::calibrated(spec.sigma2),
                                 DesignPoint{}, std::nullopt},
                     spec, std::move(hits)};
}

// ---------------------------------------------------------------------------
// Linear-Gaussian oracle: g = A theta, theta ~ N(0, diag(prior_variance))

//! 0.5 log det(I + m Sigma_0 A^T A / sigma_e^2); refuses rank-deficient A.
inline double linear_gaussian_eig(const Matrix& A, const Vector& prior_variance, double sigma2,
                                  int m = 1) {
  if (A.cols() != prior_variance.size())
    throw DomainError("linear_gaussian_eig: A has " + std::to_string(A.cols()) +
                      " columns but the prior has dimension " + std::to_string(prior_variance.size()));
  if (!(sigma2 > 0.0) || m < 1) throw DomainError("linear_gaussian_eig: need sigma_e^2 > 0 and m >= 1");
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  if (qr.rank() < A.cols())
    throw DomainError("linear_gaussian_eig: A is rank deficient; no closed form is offered");
  const Matrix s0 = prior_variance.asDiagonal();
  const Matrix k = Matrix::Identity(A.cols(), A.cols()) + m * s0 * A.transpose() * A / sigma2;
  return 0.5 * std::log(k.determinant());
}

inline ModelBundle make_linear_gaussian_model(const Matrix& A, const Vector& prior_variance,
                                              double sigma2, int m = 1) {
  if (A.rows() < 1 || A.cols() < 1) throw DomainError("make_linear_gaussian_model: empty A");
  auto eval = [A](const Vector& th, const DesignPoint&) -> Vector { return A * th; };
  auto jac = [A](const Vector&, const DesignPoint&) -> Matrix { return A; };
  ForwardModel model("linear-gaussian", static_cast<int>(A.cols()), static_cast<int>(A.rows()), 0,
                     eval, jac);
  std::optional<double> eig;
  try {
    eig = linear_gaussian_eig(A, prior_variance, sigma2, m);
  } catch (const DomainError&) {
  }
  return ModelBundle{std::move(model),
                     Prior::gaussian(Vector::Zero(A.cols()), prior_variance),
                     NoiseModel::calibrated(sigma2), DesignPoint{}, eig};
}

// ---------------------------------------------------------------------------
// One-dimensional mixture KL by quadrature

/*!
 * KL(q || p) for a 1-D Gaussian mixture q against U(lo, hi), computed by
 * composite Simpson quadrature refined until successive estimates differ by
 * less than 1e-6. The prior density is taken as the constant 1 / (hi - lo)
 * across the integration window, which spans every mean +- 12 sigma. Means
 * outside [lo, hi] are a coverage error.
 */
inline double gm1d_kl_quadrature(std::span<const double> weights, std::span<const double> means,
                                 std::span<const double> variances, double lo, double hi) {
  const std::size_t k = weights.size();
  if (k == 0 || means.size() != k || variances.size() != k)
    throw DomainError("gm1d_kl_quadrature: weights, means and variances must have equal nonzero length");
  if (!(hi > lo)) throw DomainError("gm1d_kl_quadrature: empty prior interval");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError("gm1d_kl_quadrature: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("gm1d_kl_quadrature: weights must sum to 1");
  double a = kInf, b = -kInf, smin = kInf;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(variances[i] > 0.0)) throw DomainError("gm1d_kl_quadrature: variances must be positive");
    if (means[i] < lo || means[i] > hi)
      throw DomainError("gm1d_kl_quadrature: coverage error, mean " + std::to_string(means[i]) +
                        " lies outside the prior interval");
    const double s = std::sqrt(variances[i]);
    smin = std::min(smin, s);
    a = std::min(a, means[i] - 12.0 * s);
    b = std::max(b, means[i] + 12.0 * s);
  }
  const double log_width = std::log(hi - lo);
  auto integrand = [&](double x) {
    LogSumExp acc;
    for (std::size_t i = 0; i < k; ++i) {
      if (weights[i] == 0.0) continue;
      const double z = x - means[i];
      acc.add(std::log(weights[i]) - 0.5 * (kLog2Pi + std::log(variances[i]) + z * z / variances[i]));
    }
    const double lq = acc.value();
    return lq == -kInf ? 0.0 : std::exp(lq) * (lq + log_width);
  };
  long long panels = std::max<long long>(2, static_cast<long long>(std::ceil((b - a) / (0.25 * smin))));
  if (panels % 2) ++panels;
  auto simpson = [&](long long n) {
    const double h = (b - a) / static_cast<double>(n);
    double acc = integrand(a) + integrand(b);
    for (long long i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * integrand(a + h * static_cast<double>(i));
    return acc * h / 3.0;
  };
  double prev = simpson(panels);
  for (int level = 0; level < 20; ++level) {
    panels *= 2;
    const double cur = simpson(panels);
    if (std::abs(cur - prev) < 1e-6) return cur;
    prev = cur;
  }
  throw EstimatorError("gm1d_kl_quadrature: refinement did not converge");
}

// ---------------------------------------------------------------------------
// Measurement-subset search

struct DesignCandidate {
  std::vector<int> subset;  // indices into the distance vector D
  int d_m = 0;
  EigEstimate eig;
};

struct SubsetSearchOptions {
  long long exhaustive_limit = 100;  // enumerate all subsets when C(|D|, d_m) <= this
  long long max_evaluations = -1;    // stop early with a resume token; -1 = unlimited
  std::string resume_token;
};

struct SubsetSearchResult {
  int d_m = 0;
  bool exhaustive = false;
  bool complete = true;
  std::vector<DesignCandidate> candidates;  // sorted by EIG, largest first
  std::string resume_token;                 // set when incomplete
  std::vector<int> best_subset;             // best so far, including any resumed part
  double best_value = -kInf;
};

using SubsetEvaluator = std::function<EigEstimate(const SensorNetworkSpec&)>;

namespace detail {

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline std::vector<std::vector<int>> combinations(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(k));
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<int> split_ints(const std::string& s, char sep) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

//! Token layout: "dm=<d_m>;base=<i.j...>;next=<k>;best=<i.j...>;value=<eig>".
struct ResumeToken {
  int d_m = 0;
  std::vector<int> base;
  long long next = 0;
  std::vector<int> best;
  double best_value = -kInf;

  std::string encode() const {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", best_value);
    return "dm=" + std::to_string(d_m) + ";base=" + join_ints(base, '.') + ";next=" + std::to_string(next) +
           ";best=" + join_ints(best, '.') + ";value=" + buf;
  }

  static ResumeToken decode(const std::string& s) {
    ResumeToken t;
    bool have_dm = false, have_next = false;
    std::stringstream ss(s);
    std::string field;
    try {
      while (std::getline(ss, field, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw DomainError("");
        const auto key = field.substr(0, eq), val = field.substr(eq + 1);
        if (key == "dm") {
          t.d_m = std::stoi(val);
          have_dm = true;
        } else if (key == "base") {
          t.base = split_ints(val, '.');
        } else if (key == "next") {
          t.next = std::stoll(val);
          have_next = true;
        } else if (key == "best") {
          t.best = split_ints(val, '.');
        } else if (key == "value") {
          t.best_value = std::stod(val);
        } else {
          throw DomainError("");
        }
      }
    } catch (const std::exception&) {
      throw DomainError("malformed resume token '" + s + "'");
    }
    if (!have_dm || !have_next) throw DomainError("malformed resume token '" + s + "'");
    return t;
  }
};

}  // namespace detail

/*!
 * Rank the size-d_m measurement subsets of D by EIG. All subsets are
 * evaluated when there are at most `exhaustive_limit` of them; otherwise
 * `base` (the best subset of size d_m - 1) is extended by each remaining pair.
 * When max_evaluations runs out the partial ranking is returned with a token
 * that continues the same enumeration.
 */
inline SubsetSearchResult best_design_search(const SensorNetworkSpec& spec, int d_m,
                                             const SubsetEvaluator& evaluate,
                                             const std::vector<int>& base = {},
                                             const SubsetSearchOptions& opt = {}) {
  const int nd = static_cast<int>(spec.pairs.size());
  if (d_m < 1 || d_m > nd)
    throw DomainError("best_design_search: d_m must be in [1, " + std::to_string(nd) + "]");
  SubsetSearchResult out;
  out.d_m = d_m;
  out.exhaustive = detail::binomial(nd, d_m) <= static_cast<double>(opt.exhaustive_limit);
  std::vector<int> seed_subset = base;
  long long start = 0;
  if (!opt.resume_token.empty()) {
    const auto tok = detail::ResumeToken::decode(opt.resume_token);
    if (tok.d_m != d_m) throw DomainError("resume token is for d_m=" + std::to_string(tok.d_m));
    seed_subset = tok.base;
    start = tok.next;
    out.best_subset = tok.best;
    out.best_value = tok.best_value;
  }
  std::vector<std::vector<int>> plan;
  if (out.exhaustive) {
    plan = detail::combinations(nd, d_m);
    seed_subset.clear();
  } else {
    if (static_cast<int>(seed_subset.size()) != d_m - 1)
      throw DomainError("best_design_search: greedy step needs a base subset of size " +
                        std::to_string(d_m - 1));
    for (int k = 0; k < nd; ++k) {
      if (std::find(seed_subset.begin(), seed_subset.end(), k) != seed_subset.end()) continue;
      auto s = seed_subset;
      s.insert(std::upper_bound(s.begin(), s.end(), k), k);
      plan.push_back(std::move(s));
    }
  }
  long long used = 0;
  for (auto i = static_cast<std::size_t>(start); i < plan.size(); ++i) {
    if (opt.max_evaluations >= 0 && used >= opt.max_evaluations) {
      out.complete = false;
      out.resume_token = detail::ResumeToken{d_m, seed_subset, static_cast<long long>(i),
                                             out.best_subset, out.best_value}
                             .encode();
      break;
    }
    DesignCandidate c;
    c.subset = plan[i];
    c.d_m = d_m;
    c.eig = evaluate(spec.with_measured(plan[i]));
    if (c.eig.value > out.best_value) {
      out.best_value = c.eig.value;
      out.best_subset = c.subset;
    }
    out.candidates.push_back(std::move(c));
    ++used;
  }
  std::stable_sort(out.candidates.begin(), out.candidates.end(),
                   [](const DesignCandidate& a, const DesignCandidate& b) { return a.eig.value > b.eig.value; });
  return out;
}

/*!
 * Best subset for each d_m = 1..max_dm, carrying the best subset of each
 * size forward as the greedy base of the next.
 */
inline std::vector<SubsetSearchResult> subset_sweep(const SensorNetworkSpec& spec, int max_dm,
                                                    const SubsetEvaluator& evaluate,
                                                    const SubsetSearchOptions& opt = {}) {
  std::vector<SubsetSearchResult> out;
  std::vector<int> best;
  for (int d = 1; d <= max_dm; ++d) {
    SubsetSearchOptions step = opt;
    step.resume_token.clear();
    auto r = best_design_search(spec, d, evaluate, best, step);
    best = r.best_subset;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registry

inline std::vector<std::string> model_names() { return {"quadratic", "sensor4", "sensor6", "linear-gaussian"}; }

//! Presets by name. `xi` applies to the quadratic model; `sigma2` overrides the default noise.
inline ModelBundle make_preset(const std::string& name, double xi = 1.0,
                               std::optional<double> sigma2 = std::nullopt) {
  if (name == "quadratic") return make_quadratic_model(xi, sigma2.value_or(4.0));
  if (name == "sensor4" || name == "sensor6") {
    auto spec = name == "sensor4" ? sensor4_spec() : sensor6_spec();
    if (sigma2) spec.sigma2 = *sigma2;
    return make_sensor_model(spec).bundle;
  }
  if (name == "linear-gaussian")
    return make_linear_gaussian_model(Matrix::Identity(2, 2), Vector::Ones(2), sigma2.value_or(1.0));
  std::string valid;
  for (const auto& n : model_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown model '" + name + "' (valid: " + valid + ")");
}

}  // namespace mmeig

#endif  // MMEIG_BENCHMARKS_HPP
