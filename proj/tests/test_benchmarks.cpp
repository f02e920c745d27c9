#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "mmeig/benchmarks.hpp"
#include "oracles.hpp"

namespace mmeig {
namespace {

ObservationSet rows_of(const Vector& y) {
  ObservationSet obs;
  obs.replicates = y.transpose();
  return obs;
}

// --- quadratic ---------------------------------------------------------------

TEST(QuadraticModel, EvaluateAndJacobian) {
  const auto b = make_quadratic_model(1.0);
  EXPECT_EQ(b.model.evaluate(Vector::Ones(3), b.design), (Vector(3) << 1.0, 0.5, 1.0).finished());
  Matrix expected = Matrix::Zero(3, 3);
  expected.diagonal() << 4.0, 3.0, 2.0;
  EXPECT_EQ(b.model.jacobian((Vector(3) << 2.0, 3.0, 1.0).finished(), b.design), expected);
  EXPECT_DOUBLE_EQ(b.noise.sigma2(), 4.0);
  EXPECT_EQ(b.model.param_dim(), 3);
  EXPECT_EQ(b.model.obs_dim(), 3);
  for (double xi : {0.05, 0.55}) EXPECT_NO_THROW(make_quadratic_model(xi));
  EXPECT_THROW(make_quadratic_model(std::nan("")), DomainError);
}

TEST(QuadraticModeOracle, ZeroResidualData) {
  const auto modes = quadratic_mode_oracle(rows_of((Vector(3) << 4.0, 4.5, 1.0).finished()), 1.0, 1e-6);
  ASSERT_EQ(modes.size(), 8u);
  std::set<std::vector<double>> got;
  for (const auto& m : modes) got.insert({m[0], m[1], m[2]});
  for (double a : {2.0, -2.0})
    for (double b : {3.0, -3.0})
      for (double c : {1.0, -1.0}) EXPECT_TRUE(got.count({a, b, c})) << a << " " << b << " " << c;
}

TEST(QuadraticModeOracle, NonPositiveComponentsHalveK) {
  EXPECT_EQ(quadratic_mode_oracle(rows_of((Vector(3) << -1.0, 4.5, 1.0).finished()), 1.0, 4.0).size(), 4u);
  const auto two = quadratic_mode_oracle(rows_of((Vector(3) << -1.0, 0.0, 1.0).finished()), 1.0, 4.0);
  ASSERT_EQ(two.size(), 2u);
  for (const auto& m : two) {
    EXPECT_EQ(m[0], 0.0);
    EXPECT_EQ(m[1], 0.0);
  }
  // sqrt(400 / 1) = 20 is clipped to the prior bound
  EXPECT_EQ(quadratic_mode_oracle(rows_of((Vector(3) << 400.0, 1.0, 1.0).finished()), 1.0, 4.0)[0][0], 10.0);
}

TEST(QuadraticModeOracle, ModesAreStationary) {
  const auto b = make_quadratic_model(0.4);
  auto rng = RandomStream::substream(3, 0);
  for (int t = 0; t < 20; ++t) {
    const Vector th = b.prior.sample(rng);
    const auto data = simulate_observations(b.model, th, b.design, b.noise, 1, rng);
    const PosteriorProblem prob(b.model, b.prior, b.noise, b.design, data);
    const auto target = PosteriorTarget::calibrated(prob);
    for (const auto& m : quadratic_mode_oracle(data, 0.4, 4.0)) {
      if ((m.cwiseAbs().array() == 10.0).any()) continue;  // clipped: not a stationary point
      EXPECT_LT(target.gradient(m).norm(), 1e-8) << format_vector(m);
    }
  }
}

// --- sensors -----------------------------------------------------------------

TEST(SensorModel, FixedPairDistanceAndPresetPairs) {
  const auto s4 = sensor4_spec();
  const auto layout = make_sensor_model(s4.with_measured(pair_indices(s4.pairs, {{3, 4}})));
  EXPECT_NEAR(layout.bundle.model.evaluate(Vector::Zero(4), DesignPoint{})[0], std::sqrt(0.08), 1e-15);
  EXPECT_NEAR(std::sqrt(0.08), 0.28284, 1e-5);
  const std::vector<SensorPair> expected{{1, 3}, {1, 4}, {2, 3}, {2, 4}};
  EXPECT_EQ(s4.measured_pairs(), expected);
  EXPECT_EQ(s4.pairs.size(), 6u);
  EXPECT_DOUBLE_EQ(s4.sigma2, 0.0005 * 0.0005);
  const Matrix sel = s4.selection_matrix();
  EXPECT_EQ(sel.rows(), 4);
  EXPECT_EQ(sel.cols(), 6);
  for (int r = 0; r < sel.rows(); ++r) EXPECT_EQ(sel.row(r).sum(), 1.0);
}

TEST(SensorModel, SixSensorPreset) {
  const auto s6 = sensor6_spec();
  EXPECT_EQ(s6.pairs.size(), 14u);
  EXPECT_EQ(std::count(s6.pairs.begin(), s6.pairs.end(), SensorPair{5, 6}), 0);
  EXPECT_TRUE(std::is_sorted(s6.pairs.begin(), s6.pairs.end()));
  EXPECT_EQ(s6.measured_count(), 8);
  EXPECT_EQ(s6.param_dim(), 8);
  EXPECT_DOUBLE_EQ(s6.sigma2, 0.16 * 0.16);
  EXPECT_DOUBLE_EQ(sensor6_spec(0.16).sigma2, 0.16);
  EXPECT_FALSE(s6.prior.is_uniform());
}

TEST(SensorModel, CoincidentSensorsEngageDistanceFloor) {
  const auto sm = make_sensor_model(sensor4_spec());
  Vector th(4);
  th << 0.5, 0.3, 0.3, 0.5;  // sensor 1 on sensor 3 and sensor 2 on sensor 4
  const Matrix j = sm.bundle.model.jacobian(th, DesignPoint{});
  EXPECT_TRUE(j.allFinite());
  EXPECT_GE(sm.floor_hits->load(), 2);
}

TEST(SensorModel, JacobianRowsAreAntisymmetricUnitBlocks) {
  auto spec = sensor6_spec();
  std::vector<int> all(14);
  std::iota(all.begin(), all.end(), 0);
  spec = spec.with_measured(all);
  const auto sm = make_sensor_model(spec);
  auto rng = RandomStream::substream(8, 0);
  for (int t = 0; t < 20; ++t) {
    const Vector th = spec.prior.sample(rng);
    const Matrix j = sm.bundle.model.jacobian(th, DesignPoint{});
    const Matrix fd = sm.bundle.model.finite_difference_jacobian(th, DesignPoint{});
    EXPECT_LT((j - fd).cwiseAbs().maxCoeff(), 1e-6);
    const auto pairs = spec.measured_pairs();
    for (int r = 0; r < j.rows(); ++r) {
      std::vector<Eigen::Vector2d> blocks;
      for (int u = 0; u < 4; ++u)
        if (j.row(r).segment(2 * u, 2).norm() > 0) blocks.push_back(j.row(r).segment(2 * u, 2).transpose());
      const bool both_unknown = pairs[static_cast<std::size_t>(r)].second <= 4;
      ASSERT_EQ(blocks.size(), both_unknown ? 2u : 1u);
      for (const auto& v : blocks) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
      if (both_unknown) EXPECT_LT((blocks[0] + blocks[1]).norm(), 1e-12);
    }
  }
}

TEST(SensorModel, SpecValidation) {
  auto s = sensor4_spec();
  s.measured = {6};
  EXPECT_THROW(make_sensor_model(s), DomainError);
  s = sensor4_spec();
  s.pairs = {{2, 3}, {1, 3}};
  s.measured = {0};
  EXPECT_THROW(make_sensor_model(s), DomainError);
  s = sensor4_spec();
  s.prior = Prior::uniform(3, 0.0, 1.0);
  EXPECT_THROW(make_sensor_model(s), DomainError);
}

// --- linear-Gaussian oracle ----------------------------------------------------

TEST(LinearGaussian, ClosedFormValues) {
  EXPECT_NEAR(linear_gaussian_eig(Matrix::Identity(1, 1), Vector::Ones(1), 1.0), 0.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(linear_gaussian_eig(Matrix::Identity(1, 1), Vector::Ones(1), 1.0), 0.34657, 1e-5);
  EXPECT_LT(linear_gaussian_eig(Matrix::Identity(2, 2), Vector::Ones(2), 1e12), 1e-11);
  Matrix a(3, 2);
  a << 1.0, 0.2, 0.0, 1.0, 0.5, -0.5;
  const Vector v0 = (Vector(2) << 2.0, 0.7).finished();
  const double one = linear_gaussian_eig(a, v0, 0.8, 1), two = linear_gaussian_eig(a, v0, 0.8, 2);
  EXPECT_GT(two, one);
  EXPECT_LT(two, 2.0 * one);
  EXPECT_NEAR(make_preset("linear-gaussian").analytic_eig.value(), std::log(2.0), 1e-15);
}

TEST(LinearGaussian, RankDeficientOracleRefuses) {
  const Matrix a = Matrix::Ones(2, 2);
  EXPECT_THROW(linear_gaussian_eig(a, Vector::Ones(2), 1.0), DomainError);
  const auto b = make_linear_gaussian_model(a, Vector::Ones(2), 1.0);
  EXPECT_FALSE(b.analytic_eig.has_value());
  EXPECT_NO_THROW(eig_dlmc(b.experiment(), 20, 20));
}

// --- 1-D mixture quadrature -------------------------------------------------

TEST(Gm1dQuadrature, SingleModeExample) {
  const std::vector<double> w{1.0}, mu{2.0}, var{0.5};
  const double v = gm1d_kl_quadrature(w, mu, var, 0.0, 10.0);
  EXPECT_NEAR(v, 1.2302, 1e-4);
  EXPECT_NEAR(v, oracle::gaussian_vs_uniform_kl(0.5, 0.0, 10.0), 1e-6);
}

TEST(Gm1dQuadrature, CoincidentModesEqualSingleMode) {
  const std::vector<double> w2{0.5, 0.5}, mu2{4.0, 4.0}, var2{0.3, 0.3};
  const std::vector<double> w1{1.0}, mu1{4.0}, var1{0.3};
  EXPECT_NEAR(gm1d_kl_quadrature(w2, mu2, var2, 0.0, 10.0), gm1d_kl_quadrature(w1, mu1, var1, 0.0, 10.0), 1e-6);
}

TEST(Gm1dQuadrature, SeparatedCopiesAgreeWithAnalyticMixtureKl) {
  const std::vector<double> w{0.3, 0.3, 0.4}, mu{2.0, 5.0, 7.0};
  std::vector<double> var{0.5, 0.2, 0.5};
  for (auto& v : var) v *= 1e-2;
  std::vector<LaplaceMode> modes(3);
  for (std::size_t k = 0; k < 3; ++k) {
    modes[k].location = Vector::Constant(1, mu[k]);
    modes[k].covariance = Matrix::Constant(1, 1, var[k]);
    modes[k].weight = w[k];
  }
  const double quad = gm1d_kl_quadrature(w, mu, var, 0.0, 10.0);
  EXPECT_LT(std::abs(quad - analytic_kl_mixture(GaussianMixture(modes), Prior::uniform(1, 0.0, 10.0))), 1e-3);
}

TEST(Gm1dQuadrature, GapShrinksWithSeparation) {
  const auto prior = Prior::uniform(1, 0.0, 10.0);
  double prev = kInf;
  for (double sep : {4.0, 8.0, 16.0}) {
    const double sd = 0.1;
    const std::vector<double> w{0.5, 0.5}, mu{5.0 - 0.5 * sep * sd, 5.0 + 0.5 * sep * sd}, var{sd * sd, sd * sd};
    std::vector<LaplaceMode> modes(2);
    for (std::size_t k = 0; k < 2; ++k) {
      modes[k].location = Vector::Constant(1, mu[k]);
      modes[k].covariance = Matrix::Constant(1, 1, var[k]);
      modes[k].weight = w[k];
    }
    const double gap = std::abs(gm1d_kl_quadrature(w, mu, var, 0.0, 10.0) - analytic_kl_mixture(GaussianMixture(modes), prior));
    EXPECT_LT(gap, prev) << "separation " << sep;
    prev = gap;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(Gm1dQuadrature, InputErrors) {
  const std::vector<double> w{1.0}, var{0.5}, outside{11.0}, inside{2.0};
  EXPECT_THROW(gm1d_kl_quadrature(w, outside, var, 0.0, 10.0), DomainError);
  EXPECT_THROW(gm1d_kl_quadrature(std::vector<double>{0.7}, inside, var, 0.0, 10.0), DomainError);
  EXPECT_THROW(gm1d_kl_quadrature(w, inside, var, 10.0, 0.0), DomainError);
}

// --- subset search ---------------------------------------------------------

// Deterministic stand-in for an estimator: additive pair scores with diminishing returns.
EigEstimate fake_eig(const SensorNetworkSpec& s) {
  EigEstimate e;
  double total = 0.0;
  for (int k : s.measured) total += 1.0 + 0.1 * k;
  e.value = std::log1p(total);
  e.std_error = 0.01;
  return e;
}

TEST(SubsetSearch, FullSetHasOneCandidate) {
  const auto spec = sensor4_spec();
  const auto r = best_design_search(spec, 6, fake_eig);
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_EQ(r.candidates[0].subset, (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_TRUE(r.exhaustive);
}

TEST(SubsetSearch, ExhaustiveRankingIsSorted) {
  const auto spec = sensor6_spec();
  const auto r = best_design_search(spec, 2, fake_eig);
  EXPECT_TRUE(r.exhaustive);
  EXPECT_EQ(r.candidates.size(), 91u);
  for (std::size_t i = 1; i < r.candidates.size(); ++i)
    EXPECT_GE(r.candidates[i - 1].eig.value, r.candidates[i].eig.value);
  EXPECT_EQ(r.best_subset, (std::vector<int>{12, 13}));
}

TEST(SubsetSearch, GreedyExtendsTheBase) {
  const auto spec = sensor6_spec();
  SubsetSearchOptions opt;
  opt.exhaustive_limit = 10;
  const auto r = best_design_search(spec, 3, fake_eig, {12, 13}, opt);
  EXPECT_FALSE(r.exhaustive);
  EXPECT_EQ(r.candidates.size(), 12u);
  EXPECT_EQ(r.best_subset, (std::vector<int>{11, 12, 13}));
  EXPECT_THROW(best_design_search(spec, 3, fake_eig, {13}, opt), DomainError);
}

TEST(SubsetSearch, ResumeTokenContinuesTheEnumeration) {
  const auto spec = sensor6_spec();
  const auto full = best_design_search(spec, 2, fake_eig);
  SubsetSearchOptions opt;
  opt.max_evaluations = 40;
  const auto first = best_design_search(spec, 2, fake_eig, {}, opt);
  EXPECT_FALSE(first.complete);
  ASSERT_FALSE(first.resume_token.empty());
  opt.max_evaluations = -1;
  opt.resume_token = first.resume_token;
  const auto rest = best_design_search(spec, 2, fake_eig, {}, opt);
  EXPECT_TRUE(rest.complete);
  EXPECT_EQ(first.candidates.size() + rest.candidates.size(), full.candidates.size());
  EXPECT_EQ(rest.best_subset, full.best_subset);
  EXPECT_DOUBLE_EQ(rest.best_value, full.best_value);
  opt.resume_token = "dm=3;base=;next=0";
  EXPECT_THROW(best_design_search(spec, 2, fake_eig, {}, opt), DomainError);
  opt.resume_token = "garbage";
  EXPECT_THROW(best_design_search(spec, 2, fake_eig, {}, opt), DomainError);
}

TEST(SubsetSearch, SweepIsMonotoneForAMonotoneUtility) {
  SubsetSearchOptions opt;
  opt.exhaustive_limit = 100;
  const auto sweep = subset_sweep(sensor6_spec(), 14, fake_eig, opt);
  ASSERT_EQ(sweep.size(), 14u);
  for (std::size_t d = 1; d < sweep.size(); ++d) {
    EXPECT_GE(sweep[d].best_value, sweep[d - 1].best_value);
    EXPECT_EQ(sweep[d].best_subset.size(), d + 1);
  }
  EXPECT_THROW(best_design_search(sensor6_spec(), 15, fake_eig), DomainError);
}

TEST(Registry, PresetsAndUnknownNames) {
  for (const auto& n : model_names()) EXPECT_NO_THROW(make_preset(n));
  try {
    make_preset("banana");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("quadratic, sensor4, sensor6, linear-gaussian"), std::string::npos);
  }
}

}  // namespace
}  // namespace mmeig
