#include "drcurve/inference.hpp"

#include "drcurve/error.hpp"
#include "drcurve/parallel.hpp"
#include "drcurve/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace drcurve {

namespace {

constexpr std::int64_t kDrawBlock = 1024;

Index sample_size(const PointInference& p)
{
  if (!p.has_eif()) {
    throw Error(ErrorKind::InvalidConfig,
                "influence function values missing at a0=" + std::to_string(p.a0));
  }
  return p.phi_star.size();
}

} // namespace

double normal_quantile(double p)
{
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

void check_alpha(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0)) {
    std::ostringstream os;
    os << "alpha must lie in (0, 1), got " << alpha;
    throw Error(ErrorKind::AlphaOutOfRange, os.str());
  }
}

Interval pointwise_ci(const PointInference& point, Index n, double alpha)
{
  check_alpha(alpha);
  if (!std::isfinite(point.sigma_hat)) {
    throw Error(ErrorKind::InvalidConfig, "standard error not computed for this point");
  }
  Interval ci;
  ci.estimate = point.theta_hat;
  ci.se = point.sigma_hat / std::sqrt(static_cast<double>(n) * point.h);
  const double half = normal_quantile(1.0 - alpha / 2.0) * ci.se;
  ci.lower = ci.estimate - half;
  ci.upper = ci.estimate + half;
  return ci;
}

CovarianceEstimate covariance_matrix(const std::vector<PointInference>& points,
                                     CovarianceForm form)
{
  if (points.empty()) {
    throw Error(ErrorKind::InvalidConfig, "covariance needs at least one point");
  }
  const Index n = sample_size(points.front());
  const auto& ref = points.front();
  for (const auto& p : points) {
    if (sample_size(p) != n || p.h != ref.h || p.b != ref.b ||
        !(p.gamma.kernel() == ref.gamma.kernel()) ||
        p.gamma.debiased() != ref.gamma.debiased()) {
      throw Error(ErrorKind::MixedConfiguration,
                  "points differ in bandwidth, kernel, estimator or sample size");
    }
  }
  const Index m = static_cast<Index>(points.size());
  MatrixXd phi(n, m);
  CovarianceEstimate est;
  est.form = form;
  for (Index k = 0; k < m; ++k) {
    phi.col(k) = points[k].phi_star;
    est.grid.push_back(points[k].a0);
  }
  est.cov = ref.h * (phi.transpose() * phi) / static_cast<double>(n);
  est.cov = 0.5 * (est.cov + est.cov.transpose());
  est.sigma2 = est.cov.diagonal();
  est.diagonal = est.sigma2.asDiagonal();

  est.corr.resize(m, m);
  for (Index j = 0; j < m; ++j) {
    for (Index k = 0; k < m; ++k) {
      if (j == k) {
        est.corr(j, k) = 1.0;
        continue;
      }
      const double denom = std::sqrt(est.sigma2[j] * est.sigma2[k]);
      est.corr(j, k) = denom > 0.0 ? est.cov(j, k) / denom : 0.0;
    }
  }
  return est;
}

Interval contrast_ci(const CovarianceEstimate& cov,
                     const std::vector<PointInference>& points,
                     const std::vector<double>& weights,
                     double alpha)
{
  check_alpha(alpha);
  if (weights.size() != points.size() ||
      static_cast<Index>(points.size()) != cov.cov.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "contrast weights, points and covariance differ in size");
  }
  const Index m = static_cast<Index>(points.size());
  VectorXd w(m);
  Interval ci;
  for (Index k = 0; k < m; ++k) {
    w[k] = weights[k];
    ci.estimate += weights[k] * points[k].theta_hat;
  }
  const double n = static_cast<double>(sample_size(points.front()));
  const double variance = std::max(0.0, w.dot(cov.selected() * w)) / (n * points.front().h);
  ci.se = std::sqrt(variance);
  const double half = normal_quantile(1.0 - alpha / 2.0) * ci.se;
  ci.lower = ci.estimate - half;
  ci.upper = ci.estimate + half;
  return ci;
}

Interval contrast_ci(const PointInference& first,
                     const PointInference& second,
                     double alpha,
                     CovarianceForm form)
{
  const std::vector<PointInference> pair{first, second};
  return contrast_ci(covariance_matrix(pair, form), pair, {-1.0, 1.0}, alpha);
}

MatrixXd jittered_cholesky(const MatrixXd& corr)
{
  if (corr.rows() != corr.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "correlation matrix must be square");
  }
  const Index m = corr.rows();
  for (double eps = 1e-10; eps <= 1e-6 * 1.0000001; eps *= 10.0) {
    Eigen::LLT<MatrixXd> llt(corr + eps * MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) {
      return llt.matrixL();
    }
  }
  throw Error(ErrorKind::NotFactorizable,
              "correlation matrix not positive definite after jitter up to 1e-6");
}

std::vector<double> sup_gaussian_draws(const MatrixXd& corr,
                                       std::int64_t draws,
                                       std::uint64_t seed,
                                       int threads)
{
  if (draws < 1000) {
    throw Error(ErrorKind::InvalidConfig, "at least 1000 draws are required");
  }
  const MatrixXd l = jittered_cholesky(corr);
  const Index m = l.rows();
  std::vector<double> maxima(static_cast<std::size_t>(draws));
  const std::int64_t blocks = (draws + kDrawBlock - 1) / kDrawBlock;

  parallel_for(blocks, threads, [&](std::int64_t block) {
    CounterRng rng(seed, static_cast<std::uint64_t>(block));
    VectorXd z(m);
    VectorXd x(m);
    const std::int64_t begin = block * kDrawBlock;
    const std::int64_t end = std::min(draws, begin + kDrawBlock);
    for (std::int64_t r = begin; r < end; ++r) {
      for (Index k = 0; k < m; ++k) {
        z[k] = rng.normal();
      }
      x.noalias() = l.triangularView<Eigen::Lower>() * z;
      maxima[static_cast<std::size_t>(r)] = x.cwiseAbs().maxCoeff();
    }
  });
  std::sort(maxima.begin(), maxima.end());
  return maxima;
}

double sup_quantile_from_draws(const std::vector<double>& sorted_maxima, double alpha)
{
  check_alpha(alpha);
  if (sorted_maxima.empty()) {
    throw Error(ErrorKind::InvalidConfig, "no simulated maxima");
  }
  const auto b = static_cast<double>(sorted_maxima.size());
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * b - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted_maxima.size());
  return sorted_maxima[rank - 1];
}

double sup_gaussian_quantile(const MatrixXd& corr,
                             double alpha,
                             std::int64_t draws,
                             std::uint64_t seed,
                             int threads)
{
  check_alpha(alpha);
  return sup_quantile_from_draws(sup_gaussian_draws(corr, draws, seed, threads), alpha);
}

BandResult uniform_band(const std::vector<PointInference>& curve,
                        Index n,
                        double alpha,
                        std::int64_t draws,
                        std::uint64_t seed,
                        int threads,
                        CovarianceForm form)
{
  check_alpha(alpha);
  const CovarianceEstimate cov = covariance_matrix(curve, form);
  BandResult band;
  band.alpha = alpha;
  band.draws = draws;
  band.seed = seed;
  band.corr = form == CovarianceForm::Diagonal
                ? MatrixXd::Identity(cov.corr.rows(), cov.corr.cols())
                : cov.corr;
  const double q = normal_quantile(1.0 - alpha / 2.0);
  // Monte Carlo noise can put the simulated quantile a hair below q when
  // the grid is tiny; the band is never narrower than the pointwise interval.
  band.t_quantile = std::max(q, sup_gaussian_quantile(band.corr, alpha, draws, seed, threads));

  const double h = curve.front().h;
  const double scale = std::sqrt(static_cast<double>(n) * h);
  for (const auto& p : curve) {
    const double se = p.sigma_hat / scale;
    band.grid.push_back(p.a0);
    band.theta_hat.push_back(p.theta_hat);
    band.sigma_hat.push_back(p.sigma_hat);
    band.se.push_back(se);
    band.lower.push_back(p.theta_hat - band.t_quantile * se);
    band.upper.push_back(p.theta_hat + band.t_quantile * se);
    band.lower_pointwise.push_back(p.theta_hat - q * se);
    band.upper_pointwise.push_back(p.theta_hat + q * se);
  }

  std::vector<double> sorted = band.grid;
  std::sort(sorted.begin(), sorted.end());
  double gap = 0.0;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    gap = std::max(gap, sorted[k] - sorted[k - 1]);
  }
  if (gap > h) {
    band.mesh_too_coarse = true;
    std::ostringstream os;
    os << "MeshTooCoarse: grid spacing " << gap << " exceeds h=" << h;
    band.warnings.push_back(os.str());
  }
  return band;
}

} // namespace drcurve
