#pragma once

#include "drcurve/bandwidth.hpp"
#include "drcurve/inference.hpp"
#include "drcurve/nuisance.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace drcurve {

//! Simulation design: W ~ N(0, I_4), exposure density
//! lambda(w) + 2a (1 - lambda(w)) on [0, 1] with
//! lambda(w) = 0.1 + 1.8 expit(beta' w), and a Bernoulli outcome with mean
//! expit(gamma1' wbar + a gamma2' wbar + gamma3 a^2 + gamma4 T(a)),
//! wbar = (1, w).
struct DGPSpec
{
  std::array<double, 4> beta{-1.0, -1.0, 1.0, 1.0};
  std::array<double, 5> gamma1{-1.0, -1.0, -1.0, 1.0, 1.0};
  std::array<double, 5> gamma2{3.0, -1.0, -1.0, 1.0, 1.0};
  double gamma3 = 1.0;
  double gamma4 = 3.0;

  static constexpr int dim = 4;

  double lambda(const double* w) const;
  double conditional_density(double a, const double* w) const;
  double outcome_mean(double a, const double* w) const;
  //! Outcome regression coefficients in FeatureMap::outcome_correct order.
  VectorXd outcome_coefficients() const;
};

//! Inverse of the conditional CDF lambda a + (1 - lambda) a^2.
double linear_density_inverse_cdf(double lambda, double u);

Dataset draw_dataset(Index n, std::uint64_t seed, const DGPSpec& spec = {});

//! True mu and g = p(a | w) (the marginal exposure density is 1), bound to
//! the covariate rows `w`.
NuisanceModel oracle_nuisance(const DGPSpec& spec, const MatrixXd& w);

//! Probabilists' Gauss-Hermite rule: sum_k weights[k] f(nodes[k])
//! approximates E f(Z) for Z ~ N(0, 1).
struct GaussHermiteRule
{
  VectorXd nodes;
  VectorXd weights;
};

GaussHermiteRule gauss_hermite(int nodes);

//! theta_0(a) = E expit(m(a) + s(a) Z) by Gauss-Hermite quadrature.
double true_theta(double a, const DGPSpec& spec = {}, int nodes = 60);

//! Richardson-extrapolated central difference of true_theta, step 1e-3.
double true_theta_second_derivative(double a, const DGPSpec& spec = {}, int nodes = 60);

enum class NuisanceSetting
{
  Oracle,
  //! (i) both models correctly specified and fitted
  BothCorrect,
  //! (ii) outcome correct, propensity misspecified
  PropensityMisspecified,
  //! (iii) propensity correct, outcome misspecified
  OutcomeMisspecified,
};

std::string_view to_string(NuisanceSetting s);
NuisanceSetting parse_nuisance_setting(std::string_view name);

//! Fits (or builds) the nuisance model prescribed by a setting.
NuisanceModel nuisance_for_setting(const Dataset& data,
                                   NuisanceSetting setting,
                                   const DGPSpec& spec = {});

struct BandwidthRule
{
  BandwidthMethod method = BandwidthMethod::PlugIn;
  double tau = 1.0;
  //! Manual bandwidths.
  double h = 0.0;
  double b = 0.0;
  Index loocv_grid_size = 20;
  Index omega_grid_size = 50;
};

struct EstimatorConfig
{
  std::string label = "debiased";
  bool debias = true;
  BandwidthRule bandwidth;
};

struct SimConfig
{
  Index n = 1000;
  int reps = 100;
  std::uint64_t seed = 1;
  DGPSpec spec;
  NuisanceSetting setting = NuisanceSetting::BothCorrect;
  KernelSpec kernel;
  std::vector<EstimatorConfig> estimators{EstimatorConfig{}};
  std::vector<double> eval_grid;
  double alpha = 0.05;
  bool inference = true;
  //! Contrasts theta(a) - theta(reference) for each a.
  std::vector<double> contrast_points;
  double contrast_reference = 0.5;
  bool band = false;
  double band_lower = 0.1;
  double band_upper = 0.9;
  Index band_size = 101;
  std::int64_t band_draws = 20000;
  std::optional<double> truncate_g;
  bool fast_eif = true;
  int threads = 1;

  //! {0.1, 0.15, ..., 0.9}
  static std::vector<double> default_grid();
  void validate() const;
};

struct EstimatorReport
{
  std::string label;
  std::vector<double> grid;
  std::vector<double> truth;
  std::vector<double> mean_estimate;
  std::vector<double> bias;
  std::vector<double> variance;
  std::vector<double> mse;
  std::vector<double> coverage;
  std::vector<double> contrast_points;
  std::vector<double> contrast_truth;
  std::vector<double> contrast_bias;
  std::vector<double> contrast_coverage;
  std::vector<double> contrast_coverage_diagonal;
  double band_coverage = 0.0;
  double mean_h = 0.0;
  double mean_b = 0.0;
};

struct SimReport
{
  Index n = 0;
  int reps = 0;
  int completed = 0;
  int failures = 0;
  std::vector<std::string> failure_reasons;
  std::uint64_t seed = 0;
  std::string setting;
  std::string kernel;
  double alpha = 0.05;
  std::vector<EstimatorReport> estimators;
};

//! Replicate r uses seed + r. Failed replicates are excluded and counted;
//! more than 5% failures raise ReplicationFailure.
SimReport run_replications(const SimConfig& config);

} // namespace drcurve
