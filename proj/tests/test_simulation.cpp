#include "drcurve/error.hpp"
#include "drcurve/simulation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace drcurve {
namespace {

double logistic(double x)
{
  return 1.0 / (1.0 + std::exp(-x));
}

double ks_uniform(std::vector<double> u)
{
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, (i + 1) / n - u[i], u[i] - i / n});
  }
  return d;
}

TEST(Dgp, SupportAndShape)
{
  const Dataset d = draw_dataset(5000, 3);
  EXPECT_EQ(d.size(), 5000);
  EXPECT_EQ(d.dim(), 4);
  EXPECT_GE(d.a.minCoeff(), 0.0);
  EXPECT_LE(d.a.maxCoeff(), 1.0);
  for (Index i = 0; i < d.size(); ++i) {
    EXPECT_TRUE(d.y[i] == 0.0 || d.y[i] == 1.0);
  }
  EXPECT_NEAR(d.w.col(2).mean(), 0.0, 0.05);
}

TEST(Dgp, ConditionalProbabilityTransformIsUniform)
{
  const DGPSpec spec;
  const Dataset d = draw_dataset(200000, 11, spec);
  std::vector<double> u(d.size());
  for (Index i = 0; i < d.size(); ++i) {
    Eigen::RowVector4d w = d.w.row(i);
    const double l = spec.lambda(w.data());
    u[i] = l * d.a[i] + (1.0 - l) * d.a[i] * d.a[i];
  }
  EXPECT_LT(ks_uniform(u), 0.005);
}

TEST(Dgp, OutcomeMeanMatchesDraws)
{
  const DGPSpec spec;
  const Dataset d = draw_dataset(200000, 12, spec);
  double expected = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    Eigen::RowVector4d w = d.w.row(i);
    expected += spec.outcome_mean(d.a[i], w.data());
  }
  expected /= static_cast<double>(d.size());
  EXPECT_NEAR(d.y.mean(), expected, 4.0 * 0.5 / std::sqrt(200000.0));
}

TEST(Dgp, DensityBounds)
{
  const DGPSpec spec;
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z(0.0, 3.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int r = 0; r < 10000; ++r) {
    const double w[4]{z(gen), z(gen), z(gen), z(gen)};
    const double p = spec.conditional_density(unif(gen), w);
    EXPECT_GT(p, 0.1 - 1e-12);
    EXPECT_LT(p, 1.9 + 1e-12);
  }
  const double zero[4]{0.0, 0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(spec.lambda(zero), 1.0);
  EXPECT_DOUBLE_EQ(spec.conditional_density(0.3, zero), 1.0);
  EXPECT_EQ(spec.conditional_density(1.2, zero), 0.0);
}

TEST(Dgp, InverseCdf)
{
  std::vector<double> u;
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double lambda : {0.1, 0.5, 1.0, 1.9}) {
    for (int r = 0; r < 200; ++r) {
      const double v = unif(gen);
      const double a = linear_density_inverse_cdf(lambda, v);
      EXPECT_NEAR(lambda * a + (1.0 - lambda) * a * a, v, 1e-14);
    }
    EXPECT_EQ(linear_density_inverse_cdf(lambda, 0.0), 0.0);
    EXPECT_NEAR(linear_density_inverse_cdf(lambda, 1.0), 1.0, 1e-15);
  }
  u.clear();
  for (int r = 0; r < 50000; ++r) {
    const double a = linear_density_inverse_cdf(0.4, unif(gen));
    u.push_back(0.4 * a + 0.6 * a * a);
  }
  EXPECT_LT(ks_uniform(u), 0.01);
}

TEST(Dgp, OracleNuisanceMatchesSpec)
{
  const DGPSpec spec;
  const Dataset d = draw_dataset(50, 4, spec);
  const NuisanceModel m = oracle_nuisance(spec, d.w);
  EXPECT_EQ(m.mu_provenance(), Provenance::OracleFromDGP);
  for (Index i = 0; i < d.size(); ++i) {
    Eigen::RowVector4d w = d.w.row(i);
    for (double a : {0.0, 0.3, 0.77, 1.0}) {
      EXPECT_NEAR(m.mu(a, i), spec.outcome_mean(a, w.data()), 1e-12);
      EXPECT_NEAR(m.g(a, i), spec.conditional_density(a, w.data()), 1e-14);
    }
  }
  EXPECT_THROW(oracle_nuisance(spec, MatrixXd::Zero(3, 2)), Error);
}

TEST(GaussHermite, Moments)
{
  const GaussHermiteRule r = gauss_hermite(30);
  EXPECT_NEAR(r.weights.sum(), 1.0, 1e-14);
  EXPECT_NEAR(r.weights.dot(r.nodes), 0.0, 1e-12);
  EXPECT_NEAR(r.weights.dot(r.nodes.array().square().matrix()), 1.0, 1e-11);
  EXPECT_NEAR(r.weights.dot(r.nodes.array().pow(4).matrix()), 3.0, 1e-10);
  EXPECT_NEAR(r.weights.dot(r.nodes.array().pow(6).matrix()), 15.0, 1e-9);
}

TEST(TrueTheta, DegenerateSpecs)
{
  DGPSpec flat;
  flat.gamma1 = {0, 0, 0, 0, 0};
  flat.gamma2 = {0, 0, 0, 0, 0};
  flat.gamma3 = 0.0;
  flat.gamma4 = 0.0;
  EXPECT_DOUBLE_EQ(true_theta(0.4, flat), 0.5);

  DGPSpec no_w;
  no_w.gamma1 = {-0.5, 0, 0, 0, 0};
  no_w.gamma2 = {1.5, 0, 0, 0, 0};
  for (double a : {0.1, 0.5, 0.9}) {
    const double m = -0.5 + 1.5 * a + a * a + 3.0 * exposure_wave(a);
    EXPECT_NEAR(true_theta(a, no_w), logistic(m), 1e-15);
  }
  EXPECT_THROW(true_theta(1.5), Error);
}

TEST(TrueTheta, MatchesMonteCarlo)
{
  const DGPSpec spec;
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z(0.0, 1.0);
  const int draws = 2000000;
  std::vector<std::array<double, 4>> ws(draws);
  for (auto& w : ws) {
    for (double& x : w) {
      x = z(gen);
    }
  }
  for (double a : {0.1, 0.5, 0.8}) {
    double s = 0.0;
    for (const auto& w : ws) {
      s += spec.outcome_mean(a, w.data());
    }
    EXPECT_NEAR(true_theta(a, spec), s / draws, 1e-3) << a;
  }
}

TEST(TrueTheta, SecondDerivative)
{
  DGPSpec flat;
  flat.gamma1 = {0.3, 0, 0, 0, 0};
  flat.gamma2 = {0, 0, 0, 0, 0};
  flat.gamma3 = 0.0;
  flat.gamma4 = 0.0;
  EXPECT_NEAR(true_theta_second_derivative(0.5, flat), 0.0, 1e-8);

  DGPSpec quad = flat;
  quad.gamma2 = {0.7, 0, 0, 0, 0};
  quad.gamma3 = 1.2;
  for (double a : {0.2, 0.6}) {
    const double u = 0.3 + 0.7 * a + 1.2 * a * a;
    const double du = 0.7 + 2.4 * a;
    const double f = logistic(u);
    const double want = f * (1.0 - f) * 2.4 + f * (1.0 - f) * (1.0 - 2.0 * f) * du * du;
    EXPECT_NEAR(true_theta_second_derivative(a, quad), want, 1e-6);
  }

  const double a = 0.37;
  const double d2 = true_theta_second_derivative(a);
  const double e = 2e-3;
  const double coarse =
    (true_theta(a + e) - 2.0 * true_theta(a) + true_theta(a - e)) / (e * e);
  EXPECT_NEAR(d2, coarse, 1e-3 * std::max(1.0, std::abs(d2)));
  EXPECT_THROW(true_theta_second_derivative(0.0), Error);
}

SimConfig small_config()
{
  SimConfig c;
  c.n = 300;
  c.reps = 6;
  c.seed = 21;
  c.setting = NuisanceSetting::Oracle;
  c.eval_grid = {0.3, 0.5, 0.7};
  EstimatorConfig dr;
  dr.label = "dr";
  dr.bandwidth.method = BandwidthMethod::Manual;
  dr.bandwidth.h = 0.2;
  dr.bandwidth.b = 0.2;
  EstimatorConfig ll = dr;
  ll.label = "ll";
  ll.debias = false;
  c.estimators = {dr, ll};
  c.contrast_points = {0.7};
  return c;
}

TEST(Replications, SingleReplicateCoverageIsIndicator)
{
  SimConfig c = small_config();
  c.reps = 1;
  const SimReport r = run_replications(c);
  ASSERT_EQ(r.completed, 1);
  for (const auto& e : r.estimators) {
    for (double cov : e.coverage) {
      EXPECT_TRUE(cov == 0.0 || cov == 1.0);
    }
    for (double v : e.variance) {
      EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Replications, DeterministicAcrossThreadCounts)
{
  SimConfig c = small_config();
  c.threads = 1;
  const SimReport a = run_replications(c);
  c.threads = 3;
  const SimReport b = run_replications(c);
  ASSERT_EQ(a.estimators.size(), b.estimators.size());
  for (std::size_t e = 0; e < a.estimators.size(); ++e) {
    EXPECT_EQ(a.estimators[e].mean_estimate, b.estimators[e].mean_estimate);
    EXPECT_EQ(a.estimators[e].coverage, b.estimators[e].coverage);
    EXPECT_EQ(a.estimators[e].contrast_coverage, b.estimators[e].contrast_coverage);
  }
}

TEST(Replications, MseDecomposes)
{
  const SimReport r = run_replications(small_config());
  EXPECT_EQ(r.completed + r.failures, 6);
  for (const auto& e : r.estimators) {
    for (std::size_t k = 0; k < e.grid.size(); ++k) {
      EXPECT_NEAR(e.mse[k], e.variance[k] + e.bias[k] * e.bias[k], 1e-14);
      EXPECT_NEAR(e.truth[k], true_theta(e.grid[k]), 1e-15);
    }
    EXPECT_DOUBLE_EQ(e.mean_h, 0.2);
  }
}

TEST(Replications, ReplicateUsesShiftedSeed)
{
  SimConfig c = small_config();
  c.reps = 1;
  c.seed = 22;
  c.contrast_points.clear();
  const SimReport one = run_replications(c);
  c.seed = 21;
  c.reps = 2;
  c.estimators.resize(1);
  const SimReport two = run_replications(c);
  const Dataset d = draw_dataset(300, 22);
  const PseudoOutcomes xi = pseudo_outcomes(d, oracle_nuisance(DGPSpec{}, d.w));
  const auto pts = estimate_curve(d, xi, {0.3, 0.5, 0.7}, 0.2, 0.2, KernelSpec{}).points;
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(one.estimators[0].mean_estimate[k], pts[k].theta_hat);
  }
  EXPECT_EQ(two.completed, 2);
}

TEST(Replications, InvalidConfig)
{
  SimConfig c = small_config();
  c.reps = 0;
  EXPECT_THROW(run_replications(c), Error);
  c = small_config();
  c.alpha = 1.5;
  EXPECT_THROW(run_replications(c), Error);
}

TEST(Settings, ParseNames)
{
  EXPECT_EQ(parse_nuisance_setting(to_string(NuisanceSetting::OutcomeMisspecified)),
            NuisanceSetting::OutcomeMisspecified);
  EXPECT_THROW(parse_nuisance_setting("bogus"), Error);
}

} // namespace
} // namespace drcurve
