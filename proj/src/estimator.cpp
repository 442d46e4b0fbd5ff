#include "drcurve/estimator.hpp"

#include "drcurve/error.hpp"
#include "drcurve/parallel.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace drcurve {

namespace {

void check_sizes(const Dataset& data, const PseudoOutcomes& xi)
{
  if (xi.size() != data.size()) {
    throw Error(ErrorKind::LengthMismatch, "pseudo-outcomes and dataset lengths differ");
  }
}

double poly(const VectorXd& coef, double u)
{
  double s = 0.0;
  for (Index k = coef.size() - 1; k >= 0; --k) {
    s = s * u + coef[k];
  }
  return s;
}

// gamma for an arbitrary response whose local fits are beta1 and beta3
VectorXd gamma_from_fits(const Dataset& data,
                         const PointInference& point,
                         const VectorXd& beta1,
                         const VectorXd& beta3)
{
  const GammaWeights& gw = point.gamma;
  const Index n = data.size();
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    const double a = data.a[i];
    double v = 0.0;
    const double lin = gw.linear_part(a);
    if (lin != 0.0) {
      v += lin * poly(beta1, (a - gw.a0()) / gw.h());
    }
    if (gw.debiased()) {
      const double bias = gw.bias_part(a);
      if (bias != 0.0) {
        v -= bias * poly(beta3, (a - gw.a0()) / gw.b());
      }
    }
    out[i] = v;
  }
  return out;
}

struct LocalFits
{
  VectorXd linear;
  VectorXd cubic;
};

LocalFits local_fits(const Dataset& data, const GammaWeights& gw, const VectorXd& response)
{
  LocalFits fits;
  fits.linear = gw.d_linear().solve(
    local_moment_vector(data.a, response, gw.a0(), gw.h(), 1, gw.kernel()));
  if (gw.debiased()) {
    fits.cubic = gw.d_cubic().solve(
      local_moment_vector(data.a, response, gw.a0(), gw.b(), 3, gw.kernel()));
  }
  return fits;
}

} // namespace

PointInference estimate_point(const Dataset& data,
                              const PseudoOutcomes& xi,
                              double a0,
                              double h,
                              double b,
                              const KernelSpec& kernel,
                              bool debias)
{
  check_sizes(data, xi);
  PointInference p;
  p.a0 = a0;
  p.h = h;
  p.b = b;
  p.gamma = GammaWeights(data.a, a0, h, b, kernel, debias);

  const LocalFits fits = local_fits(data, p.gamma, xi.xi);
  p.beta_linear = fits.linear;
  p.beta_cubic = fits.cubic;
  p.theta_ll = fits.linear[0];
  p.theta2_hat = debias ? 2.0 * fits.cubic[2] / (b * b) : 0.0;
  p.theta_hat = p.gamma.values_at_data().dot(xi.xi) / static_cast<double>(data.size());
  return p;
}

VectorXd gamma_n_values(const Dataset& data, const PointInference& point)
{
  return gamma_from_fits(data, point, point.beta_linear, point.beta_cubic);
}

VectorXd eif_integral_term(const Dataset& data,
                           const PseudoOutcomes& xi,
                           const PointInference& point,
                           bool skip_zero_weights)
{
  check_sizes(data, xi);
  const Index n = data.size();
  const VectorXd& gamma = point.gamma.values_at_data();
  VectorXd acc = VectorXd::Zero(n);
  std::vector<double> scratch;
  for (Index j = 0; j < n; ++j) {
    const double gj = gamma[j];
    if (skip_zero_weights && gj == 0.0) {
      continue;
    }
    const double* row = nullptr;
    if (xi.surface) {
      row = xi.surface->row(j).data();
    } else {
      scratch.resize(n);
      xi.model.mu_rows(data.a[j], scratch);
      row = scratch.data();
    }
    const double mj = xi.marginal[j];
    for (Index i = 0; i < n; ++i) {
      acc[i] += gj * (row[i] - mj);
    }
  }
  return acc / static_cast<double>(n);
}

VectorXd eif_values(const Dataset& data,
                    const PseudoOutcomes& xi,
                    const PointInference& point,
                    bool skip_zero_weights)
{
  check_sizes(data, xi);
  const VectorXd& gamma = point.gamma.values_at_data();
  return gamma.cwiseProduct(xi.xi) - gamma_n_values(data, point) +
         eif_integral_term(data, xi, point, skip_zero_weights);
}

void attach_eif(const Dataset& data,
                const PseudoOutcomes& xi,
                PointInference& point,
                bool skip_zero_weights)
{
  point.phi_star = eif_values(data, xi, point, skip_zero_weights);
  point.sigma_hat = std::sqrt(point.h * point.phi_star.squaredNorm() /
                              static_cast<double>(point.phi_star.size()));
}

OneStepTerms one_step_identity(const Dataset& data,
                               const PseudoOutcomes& xi,
                               const PointInference& point)
{
  check_sizes(data, xi);
  const Index n = data.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const VectorXd& gamma = point.gamma.values_at_data();
  const VectorXd phi =
    point.has_eif() ? point.phi_star : eif_values(data, xi, point);
  const VectorXd integral = eif_integral_term(data, xi, point);

  // the same influence-function construction with m(A_i) as the response
  const LocalFits m_fits = local_fits(data, point.gamma, xi.marginal);
  const VectorXd gamma_m = gamma_from_fits(data, point, m_fits.linear, m_fits.cubic);
  const VectorXd phi_m = gamma.cwiseProduct(xi.xi) - gamma_m + integral;

  OneStepTerms t;
  t.theta_hat = point.theta_hat;
  t.plug_in = xi.marginal_mu(point.a0);
  t.eif_mean = phi.sum() * inv_n;
  const double smoothed_m = gamma.dot(xi.marginal) * inv_n;
  t.correction = (smoothed_m - t.plug_in) + phi_m.sum() * inv_n;
  t.residual = t.theta_hat - (t.plug_in + t.eif_mean + t.correction);
  return t;
}

CurveResult estimate_curve(const Dataset& data,
                           const PseudoOutcomes& xi,
                           const std::vector<double>& grid,
                           double h,
                           double b,
                           const KernelSpec& kernel,
                           const CurveOptions& options)
{
  check_sizes(data, xi);
  for (double a0 : grid) {
    if (!std::isfinite(a0)) {
      throw Error(ErrorKind::InvalidConfig, "evaluation grid contains a non-finite value");
    }
  }
  const auto m = static_cast<std::int64_t>(grid.size());
  std::vector<std::optional<PointInference>> slots(grid.size());
  std::vector<std::string> reasons(grid.size());

  parallel_for(m, options.threads, [&](std::int64_t k) {
    try {
      PointInference p = estimate_point(data, xi, grid[k], h, b, kernel, options.debias);
      if (options.compute_eif) {
        attach_eif(data, xi, p, options.fast_eif);
      }
      slots[k] = std::move(p);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingularWindow) {
        throw;
      }
      reasons[k] = e.what();
    }
  });

  CurveResult result;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (slots[k]) {
      result.points.push_back(std::move(*slots[k]));
    } else {
      result.failures.push_back({grid[k], reasons[k]});
    }
  }
  return result;
}

} // namespace drcurve
