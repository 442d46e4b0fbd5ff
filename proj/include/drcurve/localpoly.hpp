#pragma once

#include "drcurve/kernels.hpp"

#include <algorithm>

#include <Eigen/Dense>

namespace drcurve {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstVectorRef = Eigen::Ref<const VectorXd>;

//! Polynomial order of a local design vector: 1 for the local-linear block,
//! 3 for the bias-correction block.
enum class DesignOrder : int { Linear = 1, Cubic = 3 };

//! Design vector (1, u, ..., u^order) with u = (a - a0) / h.
VectorXd design_vector(double a, double a0, double h, int order);

//! Empirical local moment matrix (1/n) sum_i w(A_i) w(A_i)^T K_h(A_i - a0).
struct DMatrix
{
  MatrixXd entries;
  double a0 = 0.0;
  double h = 0.0;
  int order = 1;
  //! Number of observations with positive kernel weight.
  Index support = 0;
  //! Smallest pivot below 1e-12 times the largest diagonal entry.
  bool singular = false;
  //! Condition number above 1e12.
  bool ill_conditioned = false;
  double condition = 0.0;

  //! Solves D x = rhs; throws SingularWindow when `singular`.
  VectorXd solve(const VectorXd& rhs) const;
  MatrixXd inverse() const;
};

//! Throws SingularWindow when no exposure falls in the kernel support. A
//! numerically singular matrix is returned with `singular` set; solving
//! with it throws.
DMatrix d_matrix(const ConstVectorRef& exposures,
                 double a0,
                 double h,
                 DesignOrder order,
                 const KernelSpec& kernel);

//! Per-observation weights of the debiased local-linear smoother at a0.
//!
//! Gamma(a) = e1' D_{h,1}^{-1} w_{h,1}(a) K_h(a)
//!          - c2 (h/b)^2 e3' D_{b,3}^{-1} w_{b,3}(a) K_b(a).
//! With `debias` false the second block is dropped and the weights reduce
//! to those of the plain local-linear smoother.
class GammaWeights
{
public:
  GammaWeights() = default;
  GammaWeights(const ConstVectorRef& exposures,
               double a0,
               double h,
               double b,
               const KernelSpec& kernel,
               bool debias = true);

  double operator()(double a) const { return linear_part(a) - bias_part(a); }

  //! e1' D_{h,1}^{-1} w_{h,1}(a) K_h(a)
  double linear_part(double a) const;
  //! c2 (h/b)^2 e3' D_{b,3}^{-1} w_{b,3}(a) K_b(a); zero when not debiased.
  double bias_part(double a) const;

  const VectorXd& values_at_data() const { return values_; }
  double a0() const { return a0_; }
  double h() const { return h_; }
  double b() const { return b_; }
  double tau() const { return h_ / b_; }
  bool debiased() const { return debias_; }
  double c2() const { return c2_; }
  const KernelSpec& kernel() const { return kernel_; }

  const DMatrix& d_linear() const { return d1_; }
  const DMatrix& d_cubic() const { return d3_; }
  //! D_{h,1}^{-1} e1
  const VectorXd& linear_row() const { return r1_; }
  //! D_{b,3}^{-1} e3
  const VectorXd& cubic_row() const { return r3_; }

  //! Largest distance from a0 at which the weight can be nonzero.
  double reach() const { return debias_ ? std::max(h_, b_) : h_; }

private:
  double a0_ = 0.0;
  double h_ = 1.0;
  double b_ = 1.0;
  double c2_ = 0.0;
  bool debias_ = true;
  KernelSpec kernel_;
  DMatrix d1_;
  DMatrix d3_;
  VectorXd r1_;
  VectorXd r3_;
  VectorXd values_;
};

GammaWeights gamma_weights(const ConstVectorRef& exposures,
                           double a0,
                           double h,
                           double b,
                           const KernelSpec& kernel,
                           bool debias = true);

//! Kernel-weighted least squares in the rescaled basis w_{h,a0,degree}.
//!
//! Returns beta with beta[0] the local intercept. Raw-scale derivatives are
//! k! beta[k] / h^k; in particular the second derivative is 2 beta[2] / h^2.
VectorXd local_poly_fit(const ConstVectorRef& x,
                        const ConstVectorRef& y,
                        double a0,
                        double h,
                        int degree,
                        const KernelSpec& kernel);

//! (1/n) sum_i w(A_i) K_h(A_i - a0) y_i
VectorXd local_moment_vector(const ConstVectorRef& x,
                             const ConstVectorRef& y,
                             double a0,
                             double h,
                             int order,
                             const KernelSpec& kernel);

} // namespace drcurve
