#pragma once

#include "drcurve/estimator.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace drcurve {

enum class BandwidthMethod { LOOCVJoint, LOOCVFixedTau, PlugIn, Manual };

std::string_view to_string(BandwidthMethod m);

struct BandwidthPair
{
  double h = 0.0;
  double b = 0.0;
  double tau = 1.0;
  BandwidthMethod method = BandwidthMethod::Manual;

  //! Validates positivity and sets tau = h / b.
  static BandwidthPair make(double h, double b, BandwidthMethod method);
};

//! (1/n) sum_i [(xi_i - theta(A_i)) / (1 - Gamma_{A_i}(A_i) / n)]^2.
//! Throws HatDiagonalOne when a denominator is at most 1e-8.
double loocv_imse(const Dataset& data,
                  const PseudoOutcomes& xi,
                  double h,
                  double b,
                  const KernelSpec& kernel,
                  bool debias = true,
                  int threads = 1);

enum class LoocvMode { Joint, FixedTau };

struct LoocvSearch
{
  LoocvMode mode = LoocvMode::FixedTau;
  //! Used in FixedTau mode: b = h / tau.
  double tau = 1.0;
  std::vector<double> h_grid;
  //! Used in Joint mode.
  std::vector<double> b_grid;
  bool debias = true;
  int threads = 1;
};

struct LoocvCell
{
  double h = 0.0;
  double b = 0.0;
  bool feasible = false;
  double imse = 0.0;
  std::string reason;
};

struct LoocvSelection
{
  BandwidthPair pair;
  //! Every visited cell in grid order (h outer, b inner).
  std::vector<LoocvCell> surface;
  Index infeasible = 0;
};

//! Exhaustive grid search; ties go to the larger h, then the larger b.
//! Throws NoFeasibleBandwidth if no cell can be evaluated.
LoocvSelection select_loocv(const Dataset& data,
                            const PseudoOutcomes& xi,
                            const KernelSpec& kernel,
                            const LoocvSearch& search);

//! Sample variance (denominator k - 1) of xi over the k nearest exposures
//! of each observation, the observation itself excluded and distance ties
//! broken by lower index.
VectorXd knn_variance(const ConstVectorRef& xi, const ConstVectorRef& exposures, Index k);

//! max(5, round(sqrt(n) / 2)), capped at n - 1.
Index default_knn_k(Index n);

//! 2.34 sd(A) n^{-1/5}
double rule_of_thumb_bandwidth(const ConstVectorRef& exposures);

//! Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(const ConstVectorRef& values, double p);

//! `size` equispaced points between the 0.05 and 0.95 empirical quantiles.
std::vector<double> default_omega_grid(const ConstVectorRef& exposures, Index size = 50);

//! `size` log-spaced values from 0.5 to 4 times the rule-of-thumb bandwidth.
std::vector<double> default_loocv_grid(const ConstVectorRef& exposures, Index size = 20);

struct PlugInComponents
{
  double pilot_h1 = 0.0;
  Index k = 0;
  VectorXd sigma2_knn;
  //! Omega grid points that survived, with the matching component values.
  std::vector<double> omega;
  std::vector<double> theta2;
  std::vector<double> b_hat;
  std::vector<double> v_hat;
  //! Grid points dropped because their window was singular.
  std::vector<double> dropped;
};

//! Bias component at a0 given the second-derivative estimate there.
double plugin_bias(const ConstVectorRef& exposures,
                   double a0,
                   double h1,
                   double theta2,
                   const KernelSpec& kernel);

//! Variance component at a0 given per-observation conditional variances.
double plugin_variance(const ConstVectorRef& exposures,
                       const ConstVectorRef& sigma2,
                       double a0,
                       double h1,
                       const KernelSpec& kernel);

PlugInComponents plugin_components(const Dataset& data,
                                   const PseudoOutcomes& xi,
                                   const KernelSpec& kernel,
                                   double h1,
                                   Index k,
                                   const std::vector<double>& omega_grid);

//! h = n^{-1/5} (mean V / (4 mean B^2))^{1/5}, b = h / tau.
//! Throws ZeroBias when mean B^2 <= 1e-14.
BandwidthPair select_plugin(const PlugInComponents& components, Index n, double tau);

} // namespace drcurve
