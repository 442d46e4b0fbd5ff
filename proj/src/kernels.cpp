#include "drcurve/kernels.hpp"

#include "drcurve/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace drcurve {

namespace {

double truncated_gaussian(double u)
{
  static const double norm =
    std::sqrt(2.0 * std::numbers::pi) * std::erf(1.0 / std::numbers::sqrt2);
  return std::exp(-0.5 * u * u) / norm;
}

// \int_{-1}^{1} u^j p(u) du for even j, p(u) = sum_k coef[k] u^(2k)
double even_poly_moment(int j, std::initializer_list<double> coef)
{
  if (j % 2 != 0) {
    return 0.0;
  }
  double s = 0.0;
  int k = 0;
  for (double a : coef) {
    s += 2.0 * a / static_cast<double>(j + 2 * k + 1);
    ++k;
  }
  return s;
}

// \int_{-1}^{1} u^j (1 - |u|)^p du = 2 * B(j + 1, p + 1) for even j
double triangular_moment(int j, int p)
{
  if (j % 2 != 0) {
    return 0.0;
  }
  return 2.0 * std::tgamma(j + 1.0) * std::tgamma(p + 1.0) / std::tgamma(j + p + 2.0);
}

} // namespace

double KernelSpec::operator()(double u) const { return eval_kernel(*this, u); }

std::string_view KernelSpec::name() const
{
  switch (family) {
    case KernelFamily::Epanechnikov: return "epanechnikov";
    case KernelFamily::Triangular: return "triangular";
    case KernelFamily::TruncatedGaussian: return "truncated-gaussian";
  }
  return "unknown";
}

KernelSpec parse_kernel(std::string_view name)
{
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  std::replace(lower.begin(), lower.end(), '_', '-');
  if (lower == "epanechnikov" || lower == "epa") {
    return {KernelFamily::Epanechnikov};
  }
  if (lower == "triangular" || lower == "tri") {
    return {KernelFamily::Triangular};
  }
  if (lower == "truncated-gaussian" || lower == "gaussian") {
    return {KernelFamily::TruncatedGaussian};
  }
  throw Error(ErrorKind::InvalidConfig, "unknown kernel '" + std::string(name) + "'");
}

double eval_kernel(const KernelSpec& kernel, double u)
{
  const double au = std::abs(u);
  if (!(au <= 1.0)) {
    return 0.0;
  }
  switch (kernel.family) {
    case KernelFamily::Epanechnikov: return 0.75 * (1.0 - u * u);
    case KernelFamily::Triangular: return 1.0 - au;
    case KernelFamily::TruncatedGaussian: return truncated_gaussian(u);
  }
  return 0.0;
}

namespace quad {

double integrate(const std::function<double(double)>& f,
                 std::vector<double> breakpoints,
                 double tolerance)
{
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()),
                    breakpoints.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, breakpoints[k], breakpoints[k + 1], 20, tolerance);
  }
  return total;
}

} // namespace quad

// Plain (power = 1) or squared-kernel (power = 2) moment of order j.
double kernel_moment(const KernelSpec& kernel, int j, int power)
{
  if (j % 2 != 0) {
    return 0.0;
  }
  switch (kernel.family) {
    case KernelFamily::Epanechnikov:
      return power == 1 ? even_poly_moment(j, {0.75, -0.75})
                        : even_poly_moment(j, {0.5625, -1.125, 0.5625});
    case KernelFamily::Triangular:
      return triangular_moment(j, power == 1 ? 1 : 2);
    case KernelFamily::TruncatedGaussian:
      return quad::integrate(
        [&](double u) { return std::pow(u, j) * std::pow(kernel(u), power); },
        {-1.0, 0.0, 1.0});
  }
  return 0.0;
}

KernelConstants kernel_constants(const KernelSpec& kernel)
{
  KernelConstants out;
  for (int j = 0; j < 6; ++j) {
    out.c[j] = kernel_moment(kernel, j, 1);
  }
  for (int j = 0; j < 5; ++j) {
    out.cstar[j] = kernel_moment(kernel, j, 2);
  }
  const double c6 = kernel_moment(kernel, 6, 1);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      out.s2(i, j) = out.c[i + j];
    }
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      out.s4(i, j) = (i + j < 6) ? out.c[i + j] : c6;
    }
  }
  return out;
}

namespace {

void check_tau(double tau)
{
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorKind::InvalidConfig, "tau must be finite and non-negative");
  }
}

} // namespace

double v_k_tau(const KernelSpec& kernel, double tau)
{
  check_tau(tau);
  const KernelConstants kc = kernel_constants(kernel);
  if (tau == 0.0) {
    return kc.cstar[0];
  }
  const double c2 = kc.c[2];
  const double denom = kc.c[4] - c2 * c2;
  const double scale = tau * tau * tau * c2 / denom;
  auto integrand = [&](double u) {
    const double v = tau * u;
    const double diff = kernel(u) - scale * (v * v - c2) * kernel(v);
    return diff * diff;
  };
  const double reach = std::max(1.0, 1.0 / tau);
  return quad::integrate(integrand,
                         {-reach, -1.0, -1.0 / tau, 0.0, 1.0 / tau, 1.0, reach});
}

double v_k_tau_expanded(const KernelSpec& kernel, double tau)
{
  check_tau(tau);
  const KernelConstants kc = kernel_constants(kernel);
  const double c2 = kc.c[2];
  const double c4 = kc.c[4];
  const double denom = c4 - c2 * c2;
  if (tau == 0.0) {
    return kc.cstar[0];
  }
  const double reach = std::min(1.0, 1.0 / tau);
  auto cross = [&](int j) {
    return quad::integrate(
      [&](double u) { return std::pow(u, j) * kernel(u) * kernel(tau * u); },
      {-reach, 0.0, reach});
  };
  const double c0_tau = cross(0);
  const double c2_tau = cross(2);
  const double tau3 = tau * tau * tau;
  const double tau5 = tau3 * tau * tau;
  return kc.cstar[0] - 2.0 * tau3 * c2 * (tau * tau * c2_tau - c2 * c0_tau) / denom +
         tau5 * c2 * c2 * (kc.cstar[4] - 2.0 * c2 * kc.cstar[2] + c2 * c2 * kc.cstar[0]) /
           (denom * denom);
}

} // namespace drcurve
