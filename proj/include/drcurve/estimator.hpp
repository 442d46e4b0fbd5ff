#pragma once

#include "drcurve/localpoly.hpp"
#include "drcurve/nuisance.hpp"

#include <limits>
#include <string>
#include <vector>

namespace drcurve {

//! Estimate at one exposure value together with everything needed for
//! inference there.
struct PointInference
{
  double a0 = 0.0;
  double h = 0.0;
  double b = 0.0;
  double theta_hat = 0.0;
  //! Local-linear component.
  double theta_ll = 0.0;
  //! Second-derivative estimate from the cubic fit with bandwidth b.
  double theta2_hat = 0.0;
  GammaWeights gamma;
  //! Local fits of xi in the rescaled bases: D_{h,1}^{-1} P_n(w K_h xi) and
  //! D_{b,3}^{-1} P_n(w K_b xi). The cubic fit is empty when not debiased.
  VectorXd beta_linear;
  VectorXd beta_cubic;
  //! Estimated influence function values, empty until computed.
  VectorXd phi_star;
  //! sqrt(h * mean(phi_star^2)); NaN until phi_star is computed.
  double sigma_hat = std::numeric_limits<double>::quiet_NaN();

  bool has_eif() const { return phi_star.size() > 0; }
};

//! theta_hat = (1/n) sum_i Gamma(A_i) xi_i. With `debias` false the bias
//! block is dropped and the result is the plain local-linear estimate.
PointInference estimate_point(const Dataset& data,
                              const PseudoOutcomes& xi,
                              double a0,
                              double h,
                              double b,
                              const KernelSpec& kernel,
                              bool debias = true);

//! gamma_n(A_i) for every observation.
VectorXd gamma_n_values(const Dataset& data, const PointInference& point);

//! (1/n) sum_j Gamma(A_j) [mu(A_j, W_i) - m(A_j)] for every i. With
//! `skip_zero_weights` only j with Gamma(A_j) != 0 are visited; the result
//! is identical since the skipped terms are exact zeros.
VectorXd eif_integral_term(const Dataset& data,
                           const PseudoOutcomes& xi,
                           const PointInference& point,
                           bool skip_zero_weights = true);

//! phi*_i = Gamma(A_i) xi_i - gamma_n(A_i) + integral term.
VectorXd eif_values(const Dataset& data,
                    const PseudoOutcomes& xi,
                    const PointInference& point,
                    bool skip_zero_weights = true);

//! Fills point.phi_star and point.sigma_hat.
void attach_eif(const Dataset& data,
                const PseudoOutcomes& xi,
                PointInference& point,
                bool skip_zero_weights = true);

//! Terms of the one-step representation at a0.
//!
//! plug_in is (1/n) sum_j mu(a0, W_j). The correction collects the
//! smoothing of m and the influence function of the same smoother applied
//! to m in place of xi; residual = theta_hat - (plug_in + eif_mean +
//! correction) vanishes up to round-off.
struct OneStepTerms
{
  double theta_hat = 0.0;
  double plug_in = 0.0;
  double eif_mean = 0.0;
  double correction = 0.0;
  double residual = 0.0;
};

OneStepTerms one_step_identity(const Dataset& data,
                               const PseudoOutcomes& xi,
                               const PointInference& point);

struct CurveOptions
{
  bool debias = true;
  bool compute_eif = true;
  bool fast_eif = true;
  int threads = 1;
};

struct GridFailure
{
  double a0 = 0.0;
  std::string reason;
};

struct CurveResult
{
  //! Successful points in grid order.
  std::vector<PointInference> points;
  std::vector<GridFailure> failures;
};

//! Evaluates the estimator on every grid point. Points whose windows are
//! singular are collected in `failures` instead of aborting the curve.
CurveResult estimate_curve(const Dataset& data,
                           const PseudoOutcomes& xi,
                           const std::vector<double>& grid,
                           double h,
                           double b,
                           const KernelSpec& kernel,
                           const CurveOptions& options = {});

} // namespace drcurve
