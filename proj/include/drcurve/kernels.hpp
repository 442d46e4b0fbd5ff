#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace drcurve {

enum class KernelFamily { Epanechnikov, Triangular, TruncatedGaussian };

//! Symmetric compactly supported second-order kernel on [-1, 1].
struct KernelSpec
{
  KernelFamily family = KernelFamily::Epanechnikov;

  double operator()(double u) const;
  std::string_view name() const;

  bool operator==(const KernelSpec&) const = default;
};

KernelSpec parse_kernel(std::string_view name);

//! Moments of K and K^2 on [-1, 1].
//!
//! `c[j]` is the integral of u^j K(u) and `cstar[j]` the integral of
//! u^j K(u)^2. `s2` and `s4` are the moment matrices with (i, j) entry
//! c[i + j] (zero-based).
struct KernelConstants
{
  std::array<double, 6> c{};
  std::array<double, 5> cstar{};
  Eigen::Matrix2d s2;
  Eigen::Matrix4d s4;
};

double eval_kernel(const KernelSpec& kernel, double u);

KernelConstants kernel_constants(const KernelSpec& kernel);

//! Integral of u^j K(u)^power over [-1, 1]; power is 1 or 2.
double kernel_moment(const KernelSpec& kernel, int j, int power);

//! Asymptotic variance inflation constant of the debiased smoother for a
//! bandwidth ratio tau = h / b, computed from the integral form.
double v_k_tau(const KernelSpec& kernel, double tau);

//! Same constant assembled from the expanded moment expression.
double v_k_tau_expanded(const KernelSpec& kernel, double tau);

namespace quad {

//! Adaptive Gauss-Kronrod integration of `f` over consecutive segments
//! between sorted `breakpoints`.
double integrate(const std::function<double(double)>& f,
                 std::vector<double> breakpoints,
                 double tolerance = 1e-13);

} // namespace quad

} // namespace drcurve
