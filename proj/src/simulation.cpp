#include "drcurve/simulation.hpp"

#include "drcurve/error.hpp"
#include "drcurve/parallel.hpp"
#include "drcurve/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace drcurve {

namespace {

// keeps dataset streams apart from the per-block streams of the band
// simulation, which share the replicate seed
constexpr std::uint64_t kDatasetStream = 0x5eed0000da7a0000ULL;

} // namespace

double DGPSpec::lambda(const double* w) const
{
  double lp = 0.0;
  for (int k = 0; k < dim; ++k) {
    lp += beta[k] * w[k];
  }
  return density_lambda(lp);
}

double DGPSpec::conditional_density(double a, const double* w) const
{
  if (a < 0.0 || a > 1.0) {
    return 0.0;
  }
  const double l = lambda(w);
  return l + 2.0 * a * (1.0 - l);
}

double DGPSpec::outcome_mean(double a, const double* w) const
{
  double lp = gamma1[0] + a * gamma2[0] + gamma3 * a * a + gamma4 * exposure_wave(a);
  for (int k = 0; k < dim; ++k) {
    lp += (gamma1[k + 1] + a * gamma2[k + 1]) * w[k];
  }
  return expit(lp);
}

VectorXd DGPSpec::outcome_coefficients() const
{
  VectorXd c(2 * (dim + 1) + 2);
  for (int k = 0; k <= dim; ++k) {
    c[k] = gamma1[k];
    c[dim + 1 + k] = gamma2[k];
  }
  c[2 * (dim + 1)] = gamma3;
  c[2 * (dim + 1) + 1] = gamma4;
  return c;
}

double linear_density_inverse_cdf(double lambda, double u)
{
  // positive root of (1 - lambda) a^2 + lambda a - u = 0, written to stay
  // stable as lambda -> 1
  return 2.0 * u / (lambda + std::sqrt(lambda * lambda + 4.0 * (1.0 - lambda) * u));
}

Dataset draw_dataset(Index n, std::uint64_t seed, const DGPSpec& spec)
{
  if (n < 1) {
    throw Error(ErrorKind::InvalidConfig, "sample size must be positive");
  }
  CounterRng rng(seed, kDatasetStream);
  Dataset d;
  d.y.resize(n);
  d.a.resize(n);
  d.w.resize(n, DGPSpec::dim);
  std::array<double, DGPSpec::dim> w{};
  for (Index i = 0; i < n; ++i) {
    for (int k = 0; k < DGPSpec::dim; ++k) {
      w[k] = rng.normal();
      d.w(i, k) = w[k];
    }
    const double a = linear_density_inverse_cdf(spec.lambda(w.data()), rng.uniform());
    d.a[i] = a;
    d.y[i] = rng.bernoulli(spec.outcome_mean(a, w.data())) ? 1.0 : 0.0;
  }
  return d;
}

NuisanceModel oracle_nuisance(const DGPSpec& spec, const MatrixXd& w)
{
  if (w.cols() != DGPSpec::dim) {
    throw Error(ErrorKind::DimensionTooSmall, "oracle nuisance needs exactly 4 covariates");
  }
  auto mu = std::make_shared<LogisticOutcome>(spec.outcome_coefficients(),
                                              FeatureMap::outcome_correct(DGPSpec::dim), w,
                                              Provenance::OracleFromDGP);
  VectorXd lambda(w.rows());
  Eigen::RowVectorXd row(w.cols());
  for (Index i = 0; i < w.rows(); ++i) {
    row = w.row(i);
    lambda[i] = spec.lambda(row.data());
  }
  auto g = std::make_shared<LambdaFunction>(
    [lambda](double a, Index i) {
      return (a < 0.0 || a > 1.0) ? 0.0 : lambda[i] + 2.0 * a * (1.0 - lambda[i]);
    },
    w.rows(), Provenance::OracleFromDGP);
  return NuisanceModel(std::move(mu), std::move(g));
}

GaussHermiteRule gauss_hermite(int nodes)
{
  if (nodes < 1) {
    throw Error(ErrorKind::InvalidConfig, "Gauss-Hermite rule needs at least one node");
  }
  // Golub-Welsch for the probabilists' Hermite recurrence
  MatrixXd jacobi = MatrixXd::Zero(nodes, nodes);
  for (int k = 1; k < nodes; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jacobi);
  GaussHermiteRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = eig.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

double true_theta(double a, const DGPSpec& spec, int nodes)
{
  if (!(a >= 0.0 && a <= 1.0)) {
    std::ostringstream os;
    os << "exposure " << a << " outside [0, 1]";
    throw Error(ErrorKind::OutOfSupport, os.str());
  }
  if (nodes < 20) {
    throw Error(ErrorKind::InvalidConfig, "true_theta needs at least 20 quadrature nodes");
  }
  const double m =
    spec.gamma1[0] + a * spec.gamma2[0] + spec.gamma3 * a * a + spec.gamma4 * exposure_wave(a);
  double s2 = 0.0;
  for (int k = 1; k <= DGPSpec::dim; ++k) {
    const double c = spec.gamma1[k] + a * spec.gamma2[k];
    s2 += c * c;
  }
  const double s = std::sqrt(s2);
  if (s == 0.0) {
    return expit(m);
  }
  const GaussHermiteRule rule = gauss_hermite(nodes);
  double total = 0.0;
  for (Index k = 0; k < rule.nodes.size(); ++k) {
    total += rule.weights[k] * expit(m + s * rule.nodes[k]);
  }
  return total;
}

double true_theta_second_derivative(double a, const DGPSpec& spec, int nodes)
{
  constexpr double step = 1e-3;
  if (!(a - step >= 0.0 && a + step <= 1.0)) {
    std::ostringstream os;
    os << "exposure " << a << " too close to the boundary of [0, 1]";
    throw Error(ErrorKind::OutOfSupport, os.str());
  }
  const double f0 = true_theta(a, spec, nodes);
  auto central = [&](double e) {
    return (true_theta(a + e, spec, nodes) - 2.0 * f0 + true_theta(a - e, spec, nodes)) / (e * e);
  };
  return (4.0 * central(step / 2.0) - central(step)) / 3.0;
}

std::string_view to_string(NuisanceSetting s)
{
  switch (s) {
    case NuisanceSetting::Oracle: return "oracle";
    case NuisanceSetting::BothCorrect: return "correct";
    case NuisanceSetting::PropensityMisspecified: return "g-misspecified";
    case NuisanceSetting::OutcomeMisspecified: return "mu-misspecified";
  }
  return "unknown";
}

NuisanceSetting parse_nuisance_setting(std::string_view name)
{
  if (name == "oracle") return NuisanceSetting::Oracle;
  if (name == "correct" || name == "i") return NuisanceSetting::BothCorrect;
  if (name == "g-misspecified" || name == "ii") return NuisanceSetting::PropensityMisspecified;
  if (name == "mu-misspecified" || name == "iii") return NuisanceSetting::OutcomeMisspecified;
  throw Error(ErrorKind::InvalidConfig, "unknown nuisance setting '" + std::string(name) + "'");
}

NuisanceModel nuisance_for_setting(const Dataset& data, NuisanceSetting setting, const DGPSpec& spec)
{
  if (setting == NuisanceSetting::Oracle) {
    return oracle_nuisance(spec, data.w);
  }
  const int d = static_cast<int>(data.dim());
  const FeatureMap mu_features = setting == NuisanceSetting::OutcomeMisspecified
                                   ? misspecified_features(d, ModelKind::Outcome)
                                   : FeatureMap::outcome_correct(d);
  const FeatureMap g_features = setting == NuisanceSetting::PropensityMisspecified
                                  ? misspecified_features(d, ModelKind::Propensity)
                                  : FeatureMap::propensity_correct(d);
  auto mu = fit_outcome_logistic(data, mu_features).mu;
  auto g = fit_propensity_mle(data, g_features).g;
  return NuisanceModel(std::move(mu), std::move(g));
}

std::vector<double> SimConfig::default_grid()
{
  std::vector<double> g;
  for (int k = 0; k <= 16; ++k) {
    g.push_back(0.1 + 0.05 * k);
  }
  return g;
}

void SimConfig::validate() const
{
  if (n < 10) {
    throw Error(ErrorKind::InvalidConfig, "simulation sample size must be at least 10");
  }
  if (reps < 1) {
    throw Error(ErrorKind::InvalidConfig, "reps must be at least 1");
  }
  if (estimators.empty()) {
    throw Error(ErrorKind::InvalidConfig, "at least one estimator is required");
  }
  check_alpha(alpha);
  auto inside = [](double a) { return a > 0.0 && a < 1.0; };
  for (double a : eval_grid) {
    if (!inside(a)) {
      throw Error(ErrorKind::InvalidConfig, "evaluation grid must lie inside (0, 1)");
    }
  }
  for (double a : contrast_points) {
    if (!inside(a)) {
      throw Error(ErrorKind::InvalidConfig, "contrast points must lie inside (0, 1)");
    }
  }
  if (!contrast_points.empty() && !inside(contrast_reference)) {
    throw Error(ErrorKind::InvalidConfig, "contrast reference must lie inside (0, 1)");
  }
  if (band && !(inside(band_lower) && inside(band_upper) && band_lower < band_upper &&
                band_size >= 1 && band_draws >= 1000)) {
    throw Error(ErrorKind::InvalidConfig,
                "band needs 0 < lower < upper < 1, at least one point and 1000 draws");
  }
  if ((band || !contrast_points.empty()) && !inference) {
    throw Error(ErrorKind::InvalidConfig, "contrasts and bands need inference enabled");
  }
  for (const auto& e : estimators) {
    if (e.bandwidth.method == BandwidthMethod::Manual &&
        !(e.bandwidth.h > 0.0 && (e.bandwidth.b > 0.0 || !e.debias))) {
      throw Error(ErrorKind::InvalidConfig, "manual bandwidths must be positive");
    }
    if (!(e.bandwidth.tau > 0.0)) {
      throw Error(ErrorKind::InvalidConfig, "tau must be positive");
    }
  }
}

namespace {

struct EstimatorRecord
{
  double h = 0.0;
  double b = 0.0;
  std::vector<double> estimate;
  std::vector<char> covered;
  std::vector<double> contrast;
  std::vector<char> contrast_covered;
  std::vector<char> contrast_covered_diagonal;
  char band_covered = 0;
};

struct ReplicateRecord
{
  bool ok = false;
  std::string reason;
  std::vector<EstimatorRecord> estimators;
};

std::vector<double> linspace(double lo, double hi, Index size)
{
  std::vector<double> g(size);
  for (Index k = 0; k < size; ++k) {
    g[k] = size == 1 ? 0.5 * (lo + hi)
                     : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(size - 1);
  }
  return g;
}

BandwidthPair choose_bandwidth(const Dataset& data,
                               const PseudoOutcomes& xi,
                               const KernelSpec& kernel,
                               const EstimatorConfig& est)
{
  const BandwidthRule& rule = est.bandwidth;
  switch (rule.method) {
    case BandwidthMethod::Manual:
      return BandwidthPair::make(rule.h, rule.b > 0.0 ? rule.b : rule.h, BandwidthMethod::Manual);
    case BandwidthMethod::PlugIn: {
      const auto comps =
        plugin_components(data, xi, kernel, rule_of_thumb_bandwidth(data.a),
                          default_knn_k(data.size()),
                          default_omega_grid(data.a, rule.omega_grid_size));
      return select_plugin(comps, data.size(), rule.tau);
    }
    case BandwidthMethod::LOOCVJoint:
    case BandwidthMethod::LOOCVFixedTau: {
      LoocvSearch search;
      search.mode = rule.method == BandwidthMethod::LOOCVJoint ? LoocvMode::Joint
                                                               : LoocvMode::FixedTau;
      search.tau = rule.tau;
      search.h_grid = default_loocv_grid(data.a, rule.loocv_grid_size);
      search.b_grid = search.h_grid;
      search.debias = est.debias;
      return select_loocv(data, xi, kernel, search).pair;
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unknown bandwidth method");
}

ReplicateRecord run_one(const SimConfig& cfg,
                        int r,
                        const std::vector<double>& grid,
                        const std::vector<double>& truth,
                        const std::vector<double>& contrast_truth,
                        const std::vector<double>& band_grid,
                        const std::vector<double>& band_truth)
{
  ReplicateRecord rec;
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
  try {
    const Dataset data = draw_dataset(cfg.n, seed, cfg.spec);
    const NuisanceModel model = nuisance_for_setting(data, cfg.setting, cfg.spec);
    PseudoOutcomeOptions po;
    po.truncate_g = cfg.truncate_g;
    const PseudoOutcomes xi = pseudo_outcomes(data, model, po);

    CurveOptions co;
    co.compute_eif = cfg.inference;
    co.fast_eif = cfg.fast_eif;

    for (const auto& est : cfg.estimators) {
      EstimatorRecord er;
      const BandwidthPair bw = choose_bandwidth(data, xi, cfg.kernel, est);
      er.h = bw.h;
      er.b = bw.b;
      co.debias = est.debias;

      auto require = [](const CurveResult& c) {
        if (!c.failures.empty()) {
          throw Error(ErrorKind::SingularWindow, c.failures.front().reason);
        }
      };
      const CurveResult curve = estimate_curve(data, xi, grid, bw.h, bw.b, cfg.kernel, co);
      require(curve);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto& p = curve.points[k];
        er.estimate.push_back(p.theta_hat);
        if (cfg.inference) {
          const Interval ci = pointwise_ci(p, cfg.n, cfg.alpha);
          er.covered.push_back(ci.lower <= truth[k] && truth[k] <= ci.upper);
        }
      }

      if (!cfg.contrast_points.empty()) {
        std::vector<double> pts{cfg.contrast_reference};
        pts.insert(pts.end(), cfg.contrast_points.begin(), cfg.contrast_points.end());
        const CurveResult cc = estimate_curve(data, xi, pts, bw.h, bw.b, cfg.kernel, co);
        require(cc);
        for (std::size_t k = 0; k < cfg.contrast_points.size(); ++k) {
          const PointInference& ref = cc.points[0];
          const PointInference& at = cc.points[k + 1];
          const Interval ci = contrast_ci(ref, at, cfg.alpha, CovarianceForm::InfluenceFunction);
          const Interval cd = contrast_ci(ref, at, cfg.alpha, CovarianceForm::Diagonal);
          const double t = contrast_truth[k];
          er.contrast.push_back(ci.estimate);
          er.contrast_covered.push_back(ci.lower <= t && t <= ci.upper);
          er.contrast_covered_diagonal.push_back(cd.lower <= t && t <= cd.upper);
        }
      }

      if (cfg.band) {
        const CurveResult bc = estimate_curve(data, xi, band_grid, bw.h, bw.b, cfg.kernel, co);
        require(bc);
        const BandResult band = uniform_band(bc.points, cfg.n, cfg.alpha, cfg.band_draws, seed);
        bool all = true;
        for (std::size_t k = 0; k < band_grid.size(); ++k) {
          all = all && band.lower[k] <= band_truth[k] && band_truth[k] <= band.upper[k];
        }
        er.band_covered = all;
      }
      rec.estimators.push_back(std::move(er));
    }
    rec.ok = true;
  } catch (const Error& e) {
    std::ostringstream os;
    os << "replicate " << r << ": " << to_string(e.kind()) << ": " << e.what();
    rec.reason = os.str();
    rec.estimators.clear();
  }
  return rec;
}

} // namespace

SimReport run_replications(const SimConfig& config)
{
  config.validate();
  const std::vector<double> grid =
    config.eval_grid.empty() ? SimConfig::default_grid() : config.eval_grid;

  std::vector<double> truth;
  for (double a : grid) {
    truth.push_back(true_theta(a, config.spec));
  }
  const double ref_truth = config.contrast_points.empty()
                             ? 0.0
                             : true_theta(config.contrast_reference, config.spec);
  std::vector<double> contrast_truth;
  for (double a : config.contrast_points) {
    contrast_truth.push_back(true_theta(a, config.spec) - ref_truth);
  }
  std::vector<double> band_grid;
  std::vector<double> band_truth;
  if (config.band) {
    band_grid = linspace(config.band_lower, config.band_upper, config.band_size);
    for (double a : band_grid) {
      band_truth.push_back(true_theta(a, config.spec));
    }
  }

  std::vector<ReplicateRecord> records(config.reps);
  parallel_for(config.reps, config.threads, [&](std::int64_t r) {
    records[r] = run_one(config, static_cast<int>(r), grid, truth, contrast_truth, band_grid,
                         band_truth);
  });

  SimReport report;
  report.n = config.n;
  report.reps = config.reps;
  report.seed = config.seed;
  report.setting = std::string(to_string(config.setting));
  report.kernel = std::string(config.kernel.name());
  report.alpha = config.alpha;
  for (const auto& rec : records) {
    if (rec.ok) {
      ++report.completed;
    } else {
      ++report.failures;
      report.failure_reasons.push_back(rec.reason);
    }
  }
  if (report.failures * 20 > config.reps) {
    std::ostringstream os;
    os << report.failures << " of " << config.reps << " replicates failed";
    if (!report.failure_reasons.empty()) {
      os << "; first: " << report.failure_reasons.front();
    }
    throw Error(ErrorKind::ReplicationFailure, os.str());
  }
  if (report.completed == 0) {
    throw Error(ErrorKind::ReplicationFailure, "no replicate completed");
  }

  const double done = static_cast<double>(report.completed);
  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    EstimatorReport er;
    er.label = config.estimators[e].label;
    er.grid = grid;
    er.truth = truth;
    const std::size_t m = grid.size();
    er.mean_estimate.assign(m, 0.0);
    er.variance.assign(m, 0.0);
    er.coverage.assign(m, 0.0);
    er.mse.assign(m, 0.0);
    const std::size_t c = config.contrast_points.size();
    er.contrast_points = config.contrast_points;
    er.contrast_truth = contrast_truth;
    er.contrast_bias.assign(c, 0.0);
    er.contrast_coverage.assign(c, 0.0);
    er.contrast_coverage_diagonal.assign(c, 0.0);

    for (const auto& rec : records) {
      if (!rec.ok) {
        continue;
      }
      const EstimatorRecord& x = rec.estimators[e];
      er.mean_h += x.h;
      er.mean_b += x.b;
      for (std::size_t k = 0; k < m; ++k) {
        er.mean_estimate[k] += x.estimate[k];
        if (config.inference) {
          er.coverage[k] += x.covered[k];
        }
      }
      for (std::size_t k = 0; k < c; ++k) {
        er.contrast_bias[k] += x.contrast[k] - contrast_truth[k];
        er.contrast_coverage[k] += x.contrast_covered[k];
        er.contrast_coverage_diagonal[k] += x.contrast_covered_diagonal[k];
      }
      er.band_coverage += x.band_covered;
    }
    er.mean_h /= done;
    er.mean_b /= done;
    for (std::size_t k = 0; k < m; ++k) {
      er.mean_estimate[k] /= done;
      er.coverage[k] /= done;
    }
    for (std::size_t k = 0; k < c; ++k) {
      er.contrast_bias[k] /= done;
      er.contrast_coverage[k] /= done;
      er.contrast_coverage_diagonal[k] /= done;
    }
    er.band_coverage /= done;

    for (const auto& rec : records) {
      if (!rec.ok) {
        continue;
      }
      for (std::size_t k = 0; k < m; ++k) {
        const double d = rec.estimators[e].estimate[k] - er.mean_estimate[k];
        const double err = rec.estimators[e].estimate[k] - truth[k];
        er.variance[k] += d * d;
        er.mse[k] += err * err;
      }
    }
    er.bias.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      er.variance[k] /= done;
      er.mse[k] /= done;
      er.bias[k] = er.mean_estimate[k] - truth[k];
    }
    if (!config.inference) {
      er.coverage.clear();
    }
    report.estimators.push_back(std::move(er));
  }
  return report;
}

} // namespace drcurve
