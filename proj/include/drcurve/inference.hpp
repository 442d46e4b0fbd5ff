#pragma once

#include "drcurve/estimator.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drcurve {

//! Standard normal quantile.
double normal_quantile(double p);

//! Throws AlphaOutOfRange unless 0 < alpha < 1.
void check_alpha(double alpha);

struct Interval
{
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

//! theta_hat +- q_{1-alpha/2} sigma_hat / sqrt(n h).
Interval pointwise_ci(const PointInference& point, Index n, double alpha);

enum class CovarianceForm
{
  //! h * mean(phi_j * phi_k)
  InfluenceFunction,
  //! sigma_hat^2 on the diagonal, zero elsewhere
  Diagonal,
};

struct CovarianceEstimate
{
  std::vector<double> grid;
  VectorXd sigma2;
  MatrixXd cov;
  MatrixXd corr;
  //! The diagonal alternative, kept for comparison.
  MatrixXd diagonal;
  CovarianceForm form = CovarianceForm::InfluenceFunction;

  //! The matrix selected by `form`.
  const MatrixXd& selected() const { return form == CovarianceForm::Diagonal ? diagonal : cov; }
};

//! Throws MixedConfiguration if the points differ in bandwidths, kernel or
//! sample size, and InvalidConfig if any lacks influence function values.
CovarianceEstimate covariance_matrix(const std::vector<PointInference>& points,
                                     CovarianceForm form = CovarianceForm::InfluenceFunction);

//! Linear combination sum_k weights[k] theta_k with variance
//! w' cov w / (n h) and a Wald interval.
Interval contrast_ci(const CovarianceEstimate& cov,
                     const std::vector<PointInference>& points,
                     const std::vector<double>& weights,
                     double alpha);

//! Convenience overload for theta(second) - theta(first).
Interval contrast_ci(const PointInference& first,
                     const PointInference& second,
                     double alpha,
                     CovarianceForm form = CovarianceForm::InfluenceFunction);

//! Lower Cholesky factor of corr + eps I, with eps = 1e-10 escalated by a
//! factor of ten up to 1e-6 when the factorization fails.
MatrixXd jittered_cholesky(const MatrixXd& corr);

//! Empirical (1 - alpha) quantile of max_k |Z_k| for Z ~ N(0, corr), from
//! `draws` simulated vectors. Draws are generated in fixed blocks with a
//! substream per block, so the result depends only on (corr, alpha, draws,
//! seed).
double sup_gaussian_quantile(const MatrixXd& corr,
                             double alpha,
                             std::int64_t draws,
                             std::uint64_t seed,
                             int threads = 1);

//! Sorted simulated maxima, shared by several alpha levels.
std::vector<double> sup_gaussian_draws(const MatrixXd& corr,
                                       std::int64_t draws,
                                       std::uint64_t seed,
                                       int threads = 1);

//! Order statistic ceil((1 - alpha) B) of sorted maxima.
double sup_quantile_from_draws(const std::vector<double>& sorted_maxima, double alpha);

struct BandResult
{
  std::vector<double> grid;
  std::vector<double> theta_hat;
  std::vector<double> sigma_hat;
  std::vector<double> se;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> lower_pointwise;
  std::vector<double> upper_pointwise;
  MatrixXd corr;
  double alpha = 0.05;
  double t_quantile = 0.0;
  std::int64_t draws = 0;
  std::uint64_t seed = 0;
  //! Largest gap between neighbouring grid points exceeds h.
  bool mesh_too_coarse = false;
  std::vector<std::string> warnings;
};

BandResult uniform_band(const std::vector<PointInference>& curve,
                        Index n,
                        double alpha,
                        std::int64_t draws,
                        std::uint64_t seed,
                        int threads = 1,
                        CovarianceForm form = CovarianceForm::InfluenceFunction);

} // namespace drcurve
