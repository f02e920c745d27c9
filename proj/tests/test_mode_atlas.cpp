#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mmeig/benchmarks.hpp"
#include "mmeig/mode_atlas.hpp"
#include "oracles.hpp"

namespace mmeig {
namespace {

ObservationSet rows_of(const Vector& y, int m = 1) {
  ObservationSet obs;
  obs.replicates = y.transpose().replicate(m, 1);
  return obs;
}

// --- required_runs ---------------------------------------------------------

TEST(RequiredRuns, MatchesBruteForceCount) {
  for (double beta : {0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9})
    for (int k : {1, 2, 3, 4, 7, 8, 10, 32})
      for (double p : {0.01, 0.05, 0.1, 0.125, 0.2, 0.25, 1.0 / 3.0, 0.5, 0.9})
        EXPECT_EQ(required_runs(beta, k, p), oracle::brute_force_runs(beta, k, p))
            << "beta=" << beta << " K=" << k << " p=" << p;
}

TEST(RequiredRuns, ClosedFormExamples) {
  EXPECT_EQ(required_runs(0.1, 1, 0.5), 4);
  // (log 0.1 - log 8) / log(7/8) = 32.82; the text rounds this to "about 30".
  EXPECT_EQ(required_runs(0.1, 8, 1.0 / 8.0), 33);
  // (log 0.01 - log 8) / log(7/8) = 50.06
  EXPECT_EQ(required_runs(0.01, 8, 1.0 / 8.0), 51);
}

TEST(RequiredRuns, DomainErrors) {
  EXPECT_THROW(required_runs(1.0, 8, 0.1), DomainError);
  EXPECT_THROW(required_runs(0.1, 8, 1.0), DomainError);
  EXPECT_THROW(required_runs(0.1, 0, 0.1), DomainError);
  EXPECT_THROW(required_runs(0.0, 8, 0.1), DomainError);
}

// Each start lands in basin k with probability p_k; capture means every basin is hit.
TEST(RequiredRuns, ModeCaptureProbabilityIsAtLeastOneMinusBeta) {
  const std::vector<std::vector<double>> basins{
      {0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125},
      {0.5, 0.3, 0.2},
      {0.05, 0.15, 0.3, 0.5},
  };
  auto rng = RandomStream::substream(2024, 0, Channel::aux);
  for (double beta : {0.1, 0.01}) {
    for (const auto& p : basins) {
      const int K = static_cast<int>(p.size());
      const int n = required_runs(beta, K, *std::min_element(p.begin(), p.end()));
      int captured = 0;
      const int trials = 10000;
      for (int t = 0; t < trials; ++t) {
        std::vector<char> hit(p.size(), 0);
        for (int s = 0; s < n; ++s) {
          double u = rng.uniform(), cum = 0.0;
          std::size_t k = p.size() - 1;
          for (std::size_t j = 0; j < p.size(); ++j)
            if (u < (cum += p[j])) {
              k = j;
              break;
            }
          hit[k] = 1;
        }
        captured += std::all_of(hit.begin(), hit.end(), [](char c) { return c != 0; });
      }
      EXPECT_GE(captured / static_cast<double>(trials), 1.0 - beta) << "K=" << K << " beta=" << beta;
    }
  }
}

// --- Latin hypercube -------------------------------------------------------

TEST(LatinHypercube, OnePointPerStratumUniform) {
  const auto prior = Prior::uniform(2, 0.0, 1.0);
  auto rng = RandomStream::substream(1, 0, Channel::search);
  const auto pts = latin_hypercube_starts(prior, 4, rng);
  ASSERT_EQ(pts.size(), 4u);
  for (int i = 0; i < 2; ++i) {
    std::vector<int> count(4, 0);
    for (const auto& p : pts) ++count[static_cast<std::size_t>(std::floor(p[i] * 4.0))];
    EXPECT_EQ(count, std::vector<int>(4, 1));
  }
}

TEST(LatinHypercube, OnePointPerStratumGaussianAndMaximin) {
  Vector mean(3), var(3);
  mean << 0.0, 2.0, -1.0;
  var << 1.0, 4.0, 0.25;
  const auto prior = Prior::gaussian(mean, var);
  for (int iterations : {1, 5}) {
    auto rng = RandomStream::substream(8, 0, Channel::search);
    const int n = 25;
    const auto pts = latin_hypercube_starts(prior, n, rng, iterations);
    for (int i = 0; i < 3; ++i) {
      std::vector<int> count(n, 0);
      for (const auto& p : pts) {
        const double u = 0.5 * std::erfc(-(p[i] - mean[i]) / std::sqrt(2.0 * var[i]));
        ++count[static_cast<std::size_t>(std::min(n - 1, static_cast<int>(std::floor(u * n))))];
      }
      EXPECT_EQ(count, std::vector<int>(n, 1)) << "coordinate " << i;
    }
  }
}

TEST(LatinHypercube, SinglePointIsAPriorDraw) {
  const auto prior = Prior::uniform(3, -10.0, 10.0);
  auto rng = RandomStream::substream(3, 0);
  const auto pts = latin_hypercube_starts(prior, 1, rng);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_TRUE(prior.in_support(pts[0]));
  EXPECT_THROW(latin_hypercube_starts(prior, 0, rng), DomainError);
}

// --- find_map --------------------------------------------------------------

TEST(FindMap, LinearGaussianRecoversPosteriorMean) {
  Matrix a(3, 2);
  a << 1.0, 0.3, 0.2, -1.5, 0.7, 0.7;
  const auto b = make_linear_gaussian_model(a, Vector::Constant(2, 2.0), 0.5);
  Vector y(3);
  y << 1.0, -0.5, 0.25;
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(y));
  const auto target = PosteriorTarget::calibrated(prob);
  const auto post = oracle::conjugate_posterior(a, Vector::Zero(2), Vector::Constant(2, 2.0), 0.5, rows_of(y).replicates);
  SearchConfig cfg;
  for (auto opt : {OptimizerKind::quasi_newton, OptimizerKind::nelder_mead}) {
    cfg.optimizer = opt;
    // the simplex stops on function flatness, so its accuracy in theta is ~sqrt(eps)
    cfg.gradient_tolerance = opt == OptimizerKind::quasi_newton ? 1e-9 : 1e-6;
    for (const Vector& start : {Vector(Vector::Zero(2)), Vector(Vector::Constant(2, 5.0)), Vector((Vector(2) << -7.0, 3.0).finished())}) {
      const auto r = find_map(posterior_objective(target), start, cfg, std::nullopt, 1.0);
      EXPECT_TRUE(r.converged) << to_string(opt);
      EXPECT_LT((r.theta - post.mean).lpNorm<Eigen::Infinity>(), 1e-6) << to_string(opt);
    }
  }
}

TEST(FindMap, QuadraticStartOrthantSelectsSigns) {
  const auto b = make_quadratic_model(1.0, 4.0);
  Vector y(3);
  y << 16.0, 8.0, 9.0;
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(y));
  const auto target = PosteriorTarget::calibrated(prob);
  const Vector c = quadratic_coefficients(1.0);
  SearchConfig cfg;
  for (int signs = 0; signs < 8; ++signs) {
    Vector start(3), expect(3);
    for (int j = 0; j < 3; ++j) {
      const double s = (signs >> j) & 1 ? -1.0 : 1.0;
      start[j] = s * 2.0;
      expect[j] = s * std::sqrt(y[j] / c[j]);
    }
    const auto r = find_map(posterior_objective(target), start, cfg, prior_box(b.prior), 10.0);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.theta - expect).lpNorm<Eigen::Infinity>(), 1e-5) << format_vector(r.theta);
  }
}

TEST(FindMap, StartAtModeConvergesImmediately) {
  const auto b = make_quadratic_model(1.0, 4.0);
  Vector th(3);
  th << 3.0, -2.0, 1.5;
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(b.model.evaluate(th, b.design)));
  const auto target = PosteriorTarget::calibrated(prob);
  const auto r = find_map(posterior_objective(target), th, SearchConfig{}, prior_box(b.prior), 10.0);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
}

TEST(FindMap, InfiniteStartIsRejected) {
  Objective obj;
  obj.value = [](const Vector& x) { return x[0] > 0 ? kInf : x.squaredNorm(); };
  EXPECT_THROW(find_map(obj, Vector::Ones(1), SearchConfig{}), StartRejectedError);
}

TEST(FindMap, IteratesNeverLeaveTheBox) {
  Objective obj;
  bool outside = false;
  const Box box{Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)};
  obj.value = [&](const Vector& x) {
    if ((x.array() < -1.0).any() || (x.array() > 1.0).any()) outside = true;
    return (x - Vector::Constant(2, 3.0)).squaredNorm();
  };
  const auto r = find_map(obj, Vector::Zero(2), SearchConfig{}, box, 1.0);
  EXPECT_FALSE(outside);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.at_boundary);
  EXPECT_TRUE(r.theta.isApprox(Vector::Ones(2)));
}

TEST(FindMap, IllConditionedMinimumOnABound) {
  // Coupled curvature ratio 1e4 with the unconstrained minimum just outside
  // x_0 >= 0: the constrained minimum solves the free block at x_0 = 0.
  Matrix a(3, 3);
  a << 1e4, 60.0, -30.0, 60.0, 1.0, 0.2, -30.0, 0.2, 0.5;
  const Vector c = (Vector(3) << -0.001, 0.5, 0.4).finished();
  Objective obj;
  obj.value = [&](const Vector& x) { return 0.5 * (x - c).dot(a * (x - c)); };
  obj.gradient = [&](const Vector& x) { return Vector(a * (x - c)); };
  const Box box{Vector::Zero(3), Vector::Ones(3)};
  Vector expected(3);
  expected[0] = 0.0;
  expected.tail(2) = c.tail(2) + a.bottomRightCorner(2, 2).ldlt().solve(a.block(1, 0, 2, 1) * c[0]);
  ASSERT_TRUE((expected.tail(2).array() > 0.0).all() && (expected.tail(2).array() < 1.0).all());
  SearchConfig cfg;
  cfg.max_iters = 100;
  cfg.nelder_mead_fallback = false;
  for (const Vector& start : {Vector(Vector::Constant(3, 0.5)), Vector((Vector(3) << 0.9, 0.1, 0.9).finished())}) {
    const auto r = find_map(obj, start, cfg, box, 1.0);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(r.at_boundary);
    EXPECT_LT((r.theta - expected).lpNorm<Eigen::Infinity>(), 1e-6) << r.theta.transpose();
  }
}

// --- multistart ------------------------------------------------------------

TEST(MultistartSearch, StronglyPositiveQuadraticDataHasEightModes) {
  const auto b = make_quadratic_model(1.0, 4.0);
  Vector y(3);
  y << 36.0, 18.0, 49.0;
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(y));
  const auto target = PosteriorTarget::calibrated(prob);
  SearchConfig cfg;
  cfg.n = 30;
  auto rng = RandomStream::substream(5, 0, Channel::search);
  const auto found = multistart_mode_search(posterior_objective(target), b.prior, cfg, rng);
  EXPECT_EQ(found.modes.size(), 8u);
  // Every recovered mode equals a closed-form stationary point.
  const auto oracle_modes = quadratic_mode_oracle(rows_of(y), 1.0, 4.0);
  for (const auto& m : found.modes) {
    const bool match = std::any_of(oracle_modes.begin(), oracle_modes.end(),
                                   [&](const Vector& o) { return (o - m.theta).lpNorm<Eigen::Infinity>() < 1e-4; });
    EXPECT_TRUE(match) << format_vector(m.theta);
  }
}

TEST(MultistartSearch, LinearGaussianHasOneMode) {
  const auto b = make_preset("linear-gaussian");
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(Vector::Constant(2, 0.8)));
  const auto target = PosteriorTarget::calibrated(prob);
  SearchConfig cfg;
  cfg.n = 10;
  auto rng = RandomStream::substream(6, 0, Channel::search);
  const auto found = multistart_mode_search(posterior_objective(target), b.prior, cfg, rng);
  EXPECT_EQ(found.modes.size(), 1u);
  EXPECT_EQ(found.converged_runs, 10);
}

TEST(MultistartSearch, NoConvergedRunIsASearchFailure) {
  Objective obj;
  obj.value = [](const Vector& x) { return x[0]; };  // unbounded below
  SearchConfig cfg;
  cfg.n = 3;
  cfg.max_iters = 3;
  cfg.nelder_mead_fallback = false;
  auto rng = RandomStream::substream(7, 0);
  try {
    multistart_mode_search(obj, Prior::gaussian(1, 0.0, 1.0), cfg, rng);
    FAIL() << "expected SearchFailureError";
  } catch (const SearchFailureError& e) {
    EXPECT_EQ(e.runs(), 3);
    EXPECT_EQ(e.converged(), 0);
  }
}

TEST(Dedup, MergesWithinRadiusAndIsIdempotent) {
  auto mk = [](double x, double f) {
    MapResult r;
    r.theta = Vector::Constant(2, x);
    r.value = f;
    r.converged = true;
    return r;
  };
  const std::vector<MapResult> found{mk(1.0, 2.0), mk(1.0 + 1e-4, 1.0), mk(-1.0, 3.0), mk(5.0, 0.5)};
  const auto once = dedup_modes(found, 1e-2);
  ASSERT_EQ(once.size(), 3u);
  EXPECT_DOUBLE_EQ(once[1].value, 1.0);  // best representative kept
  const auto twice = dedup_modes(once, 1e-2);
  ASSERT_EQ(twice.size(), once.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(twice[i].theta, once[i].theta);
}

// --- Laplace mixture -------------------------------------------------------

TEST(FitLaplaceMixture, SingleModeHasUnitWeight) {
  const auto b = make_preset("linear-gaussian");
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(Vector::Constant(2, 0.8)));
  MapResult m;
  m.theta = Vector::Constant(2, 0.4);
  m.value = neg_log_posterior(prob, m.theta);
  const auto mix = fit_laplace_mixture(prob, std::vector<MapResult>{m}, SearchConfig{});
  ASSERT_EQ(mix.size(), 1u);
  EXPECT_DOUBLE_EQ(mix.mode(0).weight, 1.0);
  EXPECT_TRUE(mix.mode(0).covariance.isApprox(Matrix::Identity(2, 2) * 0.5, 1e-12));
}

TEST(FitLaplaceMixture, SymmetricQuadraticDataGivesEqualWeights) {
  const auto b = make_quadratic_model(1.0, 4.0);
  Vector y(3);
  y << 25.0, 12.5, 16.0;
  const auto data = rows_of(y);
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, data);
  std::vector<MapResult> modes;
  for (const auto& o : quadratic_mode_oracle(data, 1.0, 4.0)) {
    MapResult m;
    m.theta = o;
    m.value = neg_log_posterior(prob, o);
    modes.push_back(m);
  }
  ASSERT_EQ(modes.size(), 8u);
  const auto mix = fit_laplace_mixture(prob, modes, SearchConfig{});
  ASSERT_EQ(mix.size(), 8u);
  for (const auto& m : mix.modes()) EXPECT_NEAR(m.weight, 1.0 / 8.0, 1e-6);
  EXPECT_NEAR(mix.weight_sum(), 1.0, 1e-12);
}

TEST(FitLaplaceMixture, TwoEquivalentModesSplitEvenlyAndFloorPrunes) {
  // 1-D posterior with two unequal wells: g = theta^2 with data 4 gives modes at +-2.
  const auto b = make_quadratic_model(1.0, 4.0);
  Vector y(3);
  y << 4.0, 8.0, 1.0;
  const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, rows_of(y));
  auto at = [&](double a) {
    MapResult m;
    m.theta = (Vector(3) << a, 4.0, 1.0).finished();
    m.value = neg_log_posterior(prob, m.theta);
    return m;
  };
  const auto mix = fit_laplace_mixture(prob, std::vector<MapResult>{at(2.0), at(-2.0)}, SearchConfig{});
  ASSERT_EQ(mix.size(), 2u);
  EXPECT_NEAR(mix.mode(0).weight, 0.5, 1e-12);
  EXPECT_NEAR(mix.mode(1).weight, 0.5, 1e-12);

  // A point far from the data has negligible weight and is dropped.
  auto far = at(2.0);
  far.theta[1] = 9.9;
  far.value = neg_log_posterior(prob, far.theta);
  const auto pruned = fit_laplace_mixture(prob, std::vector<MapResult>{at(2.0), far}, SearchConfig{});
  EXPECT_EQ(pruned.size(), 1u);
  EXPECT_NEAR(pruned.weight_sum(), 1.0, 1e-12);
}

// --- mixture density and sampling -------------------------------------------

GaussianMixture three_mode_mixture() {
  std::vector<LaplaceMode> modes(3);
  modes[0].location = (Vector(2) << -3.0, 0.0).finished();
  modes[0].covariance = (Matrix(2, 2) << 1.0, 0.3, 0.3, 0.5).finished();
  modes[0].weight = 0.2;
  modes[1].location = (Vector(2) << 2.0, 1.0).finished();
  modes[1].covariance = (Matrix(2, 2) << 0.25, 0.0, 0.0, 2.0).finished();
  modes[1].weight = 0.5;
  modes[2].location = (Vector(2) << 0.0, -4.0).finished();
  modes[2].covariance = Matrix::Identity(2, 2) * 0.7;
  modes[2].weight = 0.3;
  return GaussianMixture(modes);
}

TEST(MixtureLogpdf, AgreesWithDirectDensity) {
  const auto mix = three_mode_mixture();
  std::vector<double> w;
  std::vector<Vector> mu;
  std::vector<Matrix> cov;
  for (const auto& m : mix.modes()) {
    w.push_back(m.weight);
    mu.push_back(m.location);
    cov.push_back(m.covariance);
  }
  auto rng = RandomStream::substream(3, 0);
  for (int i = 0; i < 50; ++i) {
    const Vector x = 3.0 * rng.normal_vector(2);
    EXPECT_NEAR(mixture_logpdf(mix, x), std::log(oracle::mixture_pdf(w, mu, cov, x)), 1e-10);
  }
}

TEST(MixtureLogpdf, SingleComponentPeakAndFarTail) {
  const Matrix cov = (Matrix(3, 3) << 2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 0.5).finished();
  const Vector mean = (Vector(3) << 1.0, 2.0, 3.0).finished();
  const auto mix = GaussianMixture::single(mean, cov);
  EXPECT_NEAR(mixture_logpdf(mix, mean), -1.5 * std::log(2 * M_PI) - 0.5 * std::log(cov.determinant()), 1e-12);
  Vector tail = mean;
  tail[0] += 50.0 * std::sqrt(2.0) * 10;
  const double v = mixture_logpdf(mix, tail);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_LT(v, -1e4);
}

TEST(MixtureLogpdf, IntegratesToOne) {
  const auto mix = three_mode_mixture();
  // Self-normalized check: E_g[q/g] = 1 under a broad Gaussian g.
  const double s2 = 16.0;
  auto rng = RandomStream::substream(12, 0);
  const int n = 1000000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = std::sqrt(s2) * rng.normal_vector(2);
    const double lg = -std::log(2 * M_PI * s2) - 0.5 * x.squaredNorm() / s2;
    acc += std::exp(mixture_logpdf(mix, x) - lg);
  }
  EXPECT_NEAR(acc / n, 1.0, 0.01);
}

TEST(MixtureSample, SingleComponentMean) {
  const auto mix = GaussianMixture::single((Vector(2) << 4.0, -1.0).finished(), Matrix::Identity(2, 2));
  auto rng = RandomStream::substream(2, 0);
  const int n = 100000;
  Vector acc = Vector::Zero(2);
  for (int i = 0; i < n; ++i) acc += mixture_sample(mix, rng);
  acc /= n;
  EXPECT_NEAR(acc[0], 4.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(acc[1], -1.0, 4.0 / std::sqrt(n));
}

TEST(MixtureSample, ZeroWeightComponentIsNeverDrawn) {
  std::vector<LaplaceMode> modes(2);
  modes[0].location = Vector::Constant(1, -100.0);
  modes[0].covariance = Matrix::Identity(1, 1);
  modes[0].weight = 1.0;
  modes[1].location = Vector::Constant(1, 100.0);
  modes[1].covariance = Matrix::Identity(1, 1);
  modes[1].weight = 0.0;
  const GaussianMixture mix(modes);
  auto rng = RandomStream::substream(4, 0);
  for (int i = 0; i < 10000; ++i) ASSERT_LT(mixture_sample(mix, rng)[0], 0.0);
}

TEST(MixtureSample, ComponentFrequenciesMatchWeights) {
  // Components 100 sd apart, so each draw is attributed to its component exactly.
  const std::vector<double> w{0.2, 0.5, 0.3};
  std::vector<LaplaceMode> modes(3);
  for (std::size_t k = 0; k < 3; ++k) {
    modes[k].location = Vector::Constant(1, 100.0 * static_cast<double>(k));
    modes[k].covariance = Matrix::Identity(1, 1);
    modes[k].weight = w[k];
  }
  const GaussianMixture mix(modes);
  auto rng = RandomStream::substream(5, 0);
  const int n = 100000;
  std::vector<int> count(3, 0);
  for (int i = 0; i < n; ++i) ++count[static_cast<std::size_t>(std::lround(mixture_sample(mix, rng)[0] / 100.0))];
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(count[k] / static_cast<double>(n), w[k], 4.0 * std::sqrt(w[k] * (1 - w[k]) / n));
}

TEST(GaussianMixture, RejectsMalformedInput) {
  EXPECT_THROW(GaussianMixture(std::vector<LaplaceMode>{}), DomainError);
  LaplaceMode m;
  m.location = Vector::Zero(2);
  m.covariance = -Matrix::Identity(2, 2);
  EXPECT_THROW(GaussianMixture({m}), SingularityError);
}

}  // namespace
}  // namespace mmeig
