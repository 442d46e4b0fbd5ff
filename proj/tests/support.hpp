#pragma once

// Shared fixtures and independent reference implementations. The oracles
// avoid the library's own algebra. Kernels are written in closed form and
// moment matrices are summed entry by entry, then inverted with a dense LU.

#include "drcurve/nuisance.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>

namespace drcurve::testing {

inline double epanechnikov(double u)
{
  return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

//! Epanechnikov second moment, 0.75 * (2/3 - 2/5).
inline constexpr double kEpanechnikovC2 = 0.2;

inline double scaled_kernel(double a, double a0, double h)
{
  return epanechnikov((a - a0) / h) / h;
}

inline Eigen::VectorXd basis(double a, double a0, double h, int order)
{
  Eigen::VectorXd w(order + 1);
  const double u = (a - a0) / h;
  double p = 1.0;
  for (int k = 0; k <= order; ++k) {
    w[k] = p;
    p *= u;
  }
  return w;
}

inline Eigen::MatrixXd moment_matrix(const Eigen::VectorXd& a, double a0, double h, int order)
{
  const Index n = a.size();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(order + 1, order + 1);
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd w = basis(a[i], a0, h, order);
    for (int p = 0; p <= order; ++p) {
      for (int q = 0; q <= order; ++q) {
        d(p, q) += w[p] * w[q] * scaled_kernel(a[i], a0, h);
      }
    }
  }
  return d / static_cast<double>(n);
}

//! Explicit-inverse Gamma weights for the Epanechnikov kernel.
struct GammaOracle
{
  Eigen::VectorXd a;
  double a0;
  double h;
  double b;
  bool debias = true;
  Eigen::MatrixXd d1_inv;
  Eigen::MatrixXd d3_inv;

  GammaOracle(Eigen::VectorXd exposures, double a0_, double h_, double b_, bool debias_ = true)
    : a(std::move(exposures)), a0(a0_), h(h_), b(b_), debias(debias_)
  {
    d1_inv = moment_matrix(a, a0, h, 1).fullPivLu().inverse();
    d3_inv = moment_matrix(a, a0, b, 3).fullPivLu().inverse();
  }

  double linear(double x) const
  {
    return (d1_inv * basis(x, a0, h, 1))(0) * scaled_kernel(x, a0, h);
  }

  double bias(double x) const
  {
    if (!debias) {
      return 0.0;
    }
    const double tau = h / b;
    return kEpanechnikovC2 * tau * tau * (d3_inv * basis(x, a0, b, 3))(2) *
           scaled_kernel(x, a0, b);
  }

  double operator()(double x) const { return linear(x) - bias(x); }

  //! P_n(w K y) for the given order and bandwidth.
  Eigen::VectorXd moment_vector(const Eigen::VectorXd& y, double bw, int order) const
  {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(order + 1);
    for (Index i = 0; i < a.size(); ++i) {
      v += basis(a[i], a0, bw, order) * scaled_kernel(a[i], a0, bw) * y[i];
    }
    return v / static_cast<double>(a.size());
  }

  //! The empirical gamma display with the given response.
  double gamma_n(double x, const Eigen::VectorXd& response) const
  {
    const Eigen::VectorXd w1 = basis(x, a0, h, 1);
    double out = (d1_inv * w1)(0) * scaled_kernel(x, a0, h) *
                 (w1.transpose() * d1_inv * moment_vector(response, h, 1))(0);
    if (debias) {
      const double tau = h / b;
      const Eigen::VectorXd w3 = basis(x, a0, b, 3);
      out -= kEpanechnikovC2 * tau * tau * (d3_inv * w3)(2) * scaled_kernel(x, a0, b) *
             (w3.transpose() * d3_inv * moment_vector(response, b, 3))(0);
    }
    return out;
  }
};

using MuFn = std::function<double(double, Index)>;

//! phi*_i by the literal double loop, with `response` in the gamma term.
inline Eigen::VectorXd eif_oracle(const Dataset& data,
                                  const Eigen::VectorXd& xi,
                                  const Eigen::VectorXd& response,
                                  const MuFn& mu,
                                  const GammaOracle& gamma)
{
  const Index n = data.size();
  Eigen::VectorXd marginal(n);
  for (Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Index k = 0; k < n; ++k) {
      s += mu(data.a[j], k);
    }
    marginal[j] = s / static_cast<double>(n);
  }
  Eigen::VectorXd phi(n);
  for (Index i = 0; i < n; ++i) {
    double integral = 0.0;
    for (Index j = 0; j < n; ++j) {
      integral += gamma(data.a[j]) * (mu(data.a[j], i) - marginal[j]);
    }
    integral /= static_cast<double>(n);
    phi[i] = gamma(data.a[i]) * xi[i] - gamma.gamma_n(data.a[i], response) + integral;
  }
  return phi;
}

//! Random instance with a smooth nonconstant outcome regression and a
//! bounded standardized propensity.
struct Instance
{
  Dataset data;
  MuFn mu;
  MuFn g;
  PseudoOutcomes xi;
};

inline Instance random_instance(std::uint64_t seed, Index n)
{
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  Instance inst;
  inst.data.a.resize(n);
  inst.data.y.resize(n);
  inst.data.w.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    inst.data.a[i] = unif(gen);
    inst.data.w(i, 0) = norm(gen);
    inst.data.w(i, 1) = norm(gen);
    inst.data.y[i] = std::sin(3.0 * inst.data.a[i]) + inst.data.w(i, 0) + 0.5 * norm(gen);
  }
  const MatrixXd w = inst.data.w;
  inst.mu = [w](double a, Index i) { return std::sin(3.0 * a) + 0.8 * w(i, 0) * a + 0.3 * w(i, 1); };
  inst.g = [w](double a, Index i) { return 1.0 + 0.4 * std::tanh(w(i, 0)) * (a - 0.5); };
  const NuisanceModel model(std::make_shared<LambdaFunction>(inst.mu, n),
                            std::make_shared<LambdaFunction>(inst.g, n));
  inst.xi = pseudo_outcomes(inst.data, model);
  return inst;
}

//! Same design with xi replaced by the given values and nuisances mu = 0,
//! g = 1, so that xi equals y.
inline PseudoOutcomes direct_outcomes(const Dataset& data)
{
  const Index n = data.size();
  const NuisanceModel model(
    std::make_shared<LambdaFunction>([](double, Index) { return 0.0; }, n),
    std::make_shared<LambdaFunction>([](double, Index) { return 1.0; }, n));
  return pseudo_outcomes(data, model);
}

inline double relative_error(double got, double want)
{
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

} // namespace drcurve::testing
