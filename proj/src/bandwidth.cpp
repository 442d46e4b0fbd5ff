#include "drcurve/bandwidth.hpp"

#include "drcurve/error.hpp"
#include "drcurve/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace drcurve {

std::string_view to_string(BandwidthMethod m)
{
  switch (m) {
    case BandwidthMethod::LOOCVJoint: return "loocv";
    case BandwidthMethod::LOOCVFixedTau: return "loocv-fixed-tau";
    case BandwidthMethod::PlugIn: return "plugin";
    case BandwidthMethod::Manual: return "manual";
  }
  return "unknown";
}

BandwidthPair BandwidthPair::make(double h, double b, BandwidthMethod method)
{
  if (!(h > 0.0) || !(b > 0.0) || !std::isfinite(h) || !std::isfinite(b)) {
    std::ostringstream os;
    os << "bandwidths must be positive and finite (h=" << h << ", b=" << b << ")";
    throw Error(ErrorKind::InvalidConfig, os.str());
  }
  return BandwidthPair{h, b, h / b, method};
}

double loocv_imse(const Dataset& data,
                  const PseudoOutcomes& xi,
                  double h,
                  double b,
                  const KernelSpec& kernel,
                  bool debias,
                  int threads)
{
  const Index n = data.size();
  if (xi.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "pseudo-outcomes and dataset lengths differ");
  }
  const double dn = static_cast<double>(n);
  std::vector<double> terms(n);
  parallel_for(n, threads, [&](std::int64_t i) {
    const GammaWeights gw(data.a, data.a[i], h, b, kernel, debias);
    const double fit = gw.values_at_data().dot(xi.xi) / dn;
    const double denom = 1.0 - gw.values_at_data()[i] / dn;
    if (denom <= 1e-8) {
      std::ostringstream os;
      os << "leave-one-out denominator " << denom << " at A=" << data.a[i] << " (h=" << h
         << ", b=" << b << ")";
      throw Error(ErrorKind::HatDiagonalOne, os.str());
    }
    const double r = (xi.xi[i] - fit) / denom;
    terms[i] = r * r;
  });
  return std::accumulate(terms.begin(), terms.end(), 0.0) / dn;
}

namespace {

void check_grid(const std::vector<double>& grid, const char* name)
{
  if (grid.empty()) {
    throw Error(ErrorKind::InvalidConfig, std::string(name) + " is empty");
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0) || !std::isfinite(grid[k])) {
      throw Error(ErrorKind::InvalidConfig, std::string(name) + " must be positive");
    }
    if (k > 0 && grid[k] < grid[k - 1]) {
      throw Error(ErrorKind::InvalidConfig, std::string(name) + " must be sorted");
    }
  }
}

} // namespace

LoocvSelection select_loocv(const Dataset& data,
                            const PseudoOutcomes& xi,
                            const KernelSpec& kernel,
                            const LoocvSearch& search)
{
  check_grid(search.h_grid, "h grid");
  LoocvSelection sel;
  if (search.mode == LoocvMode::Joint) {
    check_grid(search.b_grid, "b grid");
    for (double h : search.h_grid) {
      for (double b : search.b_grid) {
        sel.surface.push_back({h, b});
      }
    }
  } else {
    if (!(search.tau > 0.0) || !std::isfinite(search.tau)) {
      throw Error(ErrorKind::InvalidConfig, "tau must be positive");
    }
    for (double h : search.h_grid) {
      sel.surface.push_back({h, h / search.tau});
    }
  }

  // cells run sequentially; each cell parallelizes over observations
  for (auto& cell : sel.surface) {
    try {
      cell.imse = loocv_imse(data, xi, cell.h, cell.b, kernel, search.debias, search.threads);
      cell.feasible = std::isfinite(cell.imse);
      if (!cell.feasible) {
        cell.reason = "non-finite objective";
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingularWindow && e.kind() != ErrorKind::HatDiagonalOne) {
        throw;
      }
      cell.reason = std::string(to_string(e.kind())) + ": " + e.what();
    }
  }

  const LoocvCell* best = nullptr;
  for (const auto& cell : sel.surface) {
    if (!cell.feasible) {
      ++sel.infeasible;
      continue;
    }
    if (!best || cell.imse < best->imse ||
        (cell.imse == best->imse &&
         (cell.h > best->h || (cell.h == best->h && cell.b > best->b)))) {
      best = &cell;
    }
  }
  if (!best) {
    throw Error(ErrorKind::NoFeasibleBandwidth,
                "no bandwidth in the search grid could be evaluated");
  }
  sel.pair = BandwidthPair::make(best->h, best->b,
                                 search.mode == LoocvMode::Joint
                                   ? BandwidthMethod::LOOCVJoint
                                   : BandwidthMethod::LOOCVFixedTau);
  return sel;
}

Index default_knn_k(Index n)
{
  const auto k = std::max<Index>(5, std::llround(std::sqrt(static_cast<double>(n)) / 2.0));
  return std::min(k, n - 1);
}

VectorXd knn_variance(const ConstVectorRef& xi, const ConstVectorRef& exposures, Index k)
{
  const Index n = exposures.size();
  if (xi.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "xi and exposures lengths differ");
  }
  if (k < 2 || k > n - 1) {
    throw Error(ErrorKind::KOutOfRange,
                "k must lie in [2, n-1], got k=" + std::to_string(k) + " with n=" +
                  std::to_string(n));
  }
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index l, Index r) { return exposures[l] < exposures[r]; });

  VectorXd out(n);
  std::vector<std::pair<double, Index>> cand;
  for (Index pos = 0; pos < n; ++pos) {
    const Index i = order[pos];
    const double ai = exposures[i];
    // k neighbours on each side in sorted order contain the k nearest;
    // widen past equal values so that index tie-breaking sees every tie
    Index lo = std::max<Index>(0, pos - k);
    Index hi = std::min<Index>(n - 1, pos + k);
    while (lo > 0 && exposures[order[lo - 1]] == exposures[order[lo]]) {
      --lo;
    }
    while (hi < n - 1 && exposures[order[hi + 1]] == exposures[order[hi]]) {
      ++hi;
    }
    cand.clear();
    for (Index q = lo; q <= hi; ++q) {
      if (q != pos) {
        cand.emplace_back(std::abs(exposures[order[q]] - ai), order[q]);
      }
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    double mean = 0.0;
    for (Index q = 0; q < k; ++q) {
      mean += xi[cand[q].second];
    }
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (Index q = 0; q < k; ++q) {
      const double d = xi[cand[q].second] - mean;
      ss += d * d;
    }
    out[i] = ss / static_cast<double>(k - 1);
  }
  return out;
}

double rule_of_thumb_bandwidth(const ConstVectorRef& exposures)
{
  const Index n = exposures.size();
  if (n < 2) {
    throw Error(ErrorKind::InvalidData, "need at least two exposures");
  }
  const double mean = exposures.mean();
  const double var = (exposures.array() - mean).square().sum() / static_cast<double>(n - 1);
  return 2.34 * std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
}

double empirical_quantile(const ConstVectorRef& values, double p)
{
  if (values.size() == 0) {
    throw Error(ErrorKind::InvalidData, "quantile of an empty sample");
  }
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return v[lo] + t * (v[hi] - v[lo]);
}

std::vector<double> default_omega_grid(const ConstVectorRef& exposures, Index size)
{
  const double lo = empirical_quantile(exposures, 0.05);
  const double hi = empirical_quantile(exposures, 0.95);
  std::vector<double> grid(size);
  for (Index k = 0; k < size; ++k) {
    grid[k] = size == 1 ? 0.5 * (lo + hi)
                        : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(size - 1);
  }
  return grid;
}

std::vector<double> default_loocv_grid(const ConstVectorRef& exposures, Index size)
{
  const double rot = rule_of_thumb_bandwidth(exposures);
  const double lo = std::log(0.5 * rot);
  const double hi = std::log(4.0 * rot);
  std::vector<double> grid(size);
  for (Index k = 0; k < size; ++k) {
    grid[k] = size == 1 ? rot
                        : std::exp(lo + (hi - lo) * static_cast<double>(k) /
                                          static_cast<double>(size - 1));
  }
  return grid;
}

double plugin_bias(const ConstVectorRef& exposures,
                   double a0,
                   double h1,
                   double theta2,
                   const KernelSpec& kernel)
{
  const DMatrix d = d_matrix(exposures, a0, h1, DesignOrder::Linear, kernel);
  const Index n = exposures.size();
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (Index i = 0; i < n; ++i) {
    const double u = (exposures[i] - a0) / h1;
    const double k = kernel(u);
    if (k <= 0.0) {
      continue;
    }
    const double v = k / h1 * 0.5 * theta2 * u * u;
    acc[0] += v;
    acc[1] += v * u;
  }
  acc /= static_cast<double>(n);
  return d.solve(VectorXd::Unit(2, 0)).dot(acc);
}

double plugin_variance(const ConstVectorRef& exposures,
                       const ConstVectorRef& sigma2,
                       double a0,
                       double h1,
                       const KernelSpec& kernel)
{
  const DMatrix d = d_matrix(exposures, a0, h1, DesignOrder::Linear, kernel);
  const Index n = exposures.size();
  Eigen::Matrix2d middle = Eigen::Matrix2d::Zero();
  for (Index i = 0; i < n; ++i) {
    const double u = (exposures[i] - a0) / h1;
    const double k = kernel(u) / h1;
    if (k <= 0.0) {
      continue;
    }
    const double v = k * k * sigma2[i];
    middle(0, 0) += v;
    middle(0, 1) += v * u;
    middle(1, 1) += v * u * u;
  }
  middle(1, 0) = middle(0, 1);
  middle /= static_cast<double>(n);
  const VectorXd r = d.solve(VectorXd::Unit(2, 0));
  return r.dot(middle * r);
}

PlugInComponents plugin_components(const Dataset& data,
                                   const PseudoOutcomes& xi,
                                   const KernelSpec& kernel,
                                   double h1,
                                   Index k,
                                   const std::vector<double>& omega_grid)
{
  if (!(h1 > 0.0) || !std::isfinite(h1)) {
    throw Error(ErrorKind::InvalidConfig, "pilot bandwidth must be positive");
  }
  if (omega_grid.empty()) {
    throw Error(ErrorKind::InvalidConfig, "omega grid is empty");
  }
  PlugInComponents c;
  c.pilot_h1 = h1;
  c.k = k;
  c.sigma2_knn = knn_variance(xi.xi, data.a, k);
  for (double a0 : omega_grid) {
    try {
      const VectorXd beta = local_poly_fit(data.a, xi.xi, a0, h1, 3, kernel);
      const double theta2 = 2.0 * beta[2] / (h1 * h1);
      const double bias = plugin_bias(data.a, a0, h1, theta2, kernel);
      const double var = plugin_variance(data.a, c.sigma2_knn, a0, h1, kernel);
      c.omega.push_back(a0);
      c.theta2.push_back(theta2);
      c.b_hat.push_back(bias);
      c.v_hat.push_back(var);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingularWindow) {
        throw;
      }
      c.dropped.push_back(a0);
    }
  }
  if (c.omega.empty()) {
    throw Error(ErrorKind::SingularWindow,
                "pilot bandwidth leaves every omega grid point with a singular window");
  }
  return c;
}

BandwidthPair select_plugin(const PlugInComponents& c, Index n, double tau)
{
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorKind::InvalidConfig, "tau must be positive");
  }
  const double m = static_cast<double>(c.omega.size());
  double mean_v = 0.0;
  double mean_b2 = 0.0;
  for (std::size_t k = 0; k < c.omega.size(); ++k) {
    mean_v += c.v_hat[k];
    mean_b2 += c.b_hat[k] * c.b_hat[k];
  }
  mean_v /= m;
  mean_b2 /= m;
  if (mean_b2 <= 1e-14) {
    throw Error(ErrorKind::ZeroBias,
                "estimated bias is zero; plug-in rule undefined, supply bandwidths manually");
  }
  const double h =
    std::pow(static_cast<double>(n), -0.2) * std::pow(mean_v / (4.0 * mean_b2), 0.2);
  return BandwidthPair::make(h, h / tau, BandwidthMethod::PlugIn);
}

} // namespace drcurve
