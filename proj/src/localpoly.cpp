#include "drcurve/localpoly.hpp"

#include "drcurve/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace drcurve {

namespace {

constexpr double kPivotTolerance = 1e-12;
constexpr double kConditionLimit = 1e12;

std::string window_message(const char* what, double a0, double h, int order)
{
  std::ostringstream os;
  os << what << " at a0=" << a0 << " (h=" << h << ", order=" << order
     << "); bandwidth too small for the data";
  return os.str();
}

} // namespace

VectorXd design_vector(double a, double a0, double h, int order)
{
  VectorXd w(order + 1);
  const double u = (a - a0) / h;
  double p = 1.0;
  for (int k = 0; k <= order; ++k) {
    w[k] = p;
    p *= u;
  }
  return w;
}

DMatrix d_matrix(const ConstVectorRef& exposures,
                 double a0,
                 double h,
                 DesignOrder order,
                 const KernelSpec& kernel)
{
  const int p = static_cast<int>(order);
  const Index n = exposures.size();
  if (!(h > 0.0) || n == 0) {
    throw Error(ErrorKind::SingularWindow, window_message("empty design", a0, h, p));
  }

  // power sums of u^k K(u), k = 0..2p
  std::vector<double> moments(2 * p + 1, 0.0);
  Index support = 0;
  for (Index i = 0; i < n; ++i) {
    const double u = (exposures[i] - a0) / h;
    const double k = kernel(u);
    if (k <= 0.0) {
      continue;
    }
    ++support;
    double up = k;
    for (int m = 0; m <= 2 * p; ++m) {
      moments[m] += up;
      up *= u;
    }
  }
  if (support == 0) {
    throw Error(ErrorKind::SingularWindow,
                window_message("no exposures in kernel support", a0, h, p));
  }

  DMatrix d;
  d.a0 = a0;
  d.h = h;
  d.order = p;
  d.support = support;
  d.entries.resize(p + 1, p + 1);
  const double scale = 1.0 / (static_cast<double>(n) * h);
  for (int r = 0; r <= p; ++r) {
    for (int c = 0; c <= p; ++c) {
      d.entries(r, c) = moments[r + c] * scale;
    }
  }

  Eigen::PartialPivLU<MatrixXd> lu(d.entries);
  const double max_diag = d.entries.diagonal().cwiseAbs().maxCoeff();
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  d.singular = !(min_pivot >= kPivotTolerance * max_diag);

  Eigen::JacobiSVD<MatrixXd> svd(d.entries);
  const auto& sv = svd.singularValues();
  const double smallest = sv[sv.size() - 1];
  d.condition = smallest > 0.0 ? sv[0] / smallest : std::numeric_limits<double>::infinity();
  d.ill_conditioned = d.condition > kConditionLimit;
  return d;
}

VectorXd DMatrix::solve(const VectorXd& rhs) const
{
  if (singular) {
    throw Error(ErrorKind::SingularWindow,
                window_message("numerically singular design matrix", a0, h, order));
  }
  return entries.partialPivLu().solve(rhs);
}

MatrixXd DMatrix::inverse() const
{
  return solve(MatrixXd::Identity(entries.rows(), entries.cols()));
}

GammaWeights::GammaWeights(const ConstVectorRef& exposures,
                           double a0,
                           double h,
                           double b,
                           const KernelSpec& kernel,
                           bool debias)
  : a0_(a0), h_(h), b_(b), debias_(debias), kernel_(kernel)
{
  if (!(h > 0.0) || !(b > 0.0) || !std::isfinite(h) || !std::isfinite(b)) {
    throw Error(ErrorKind::InvalidConfig, "bandwidths must be positive and finite");
  }
  c2_ = kernel_moment(kernel, 2, 1);
  d1_ = d_matrix(exposures, a0, h, DesignOrder::Linear, kernel);
  r1_ = d1_.solve(VectorXd::Unit(2, 0));
  if (debias_) {
    d3_ = d_matrix(exposures, a0, b, DesignOrder::Cubic, kernel);
    r3_ = d3_.solve(VectorXd::Unit(4, 2));
  }
  values_.resize(exposures.size());
  for (Index i = 0; i < exposures.size(); ++i) {
    values_[i] = (*this)(exposures[i]);
  }
}

double GammaWeights::linear_part(double a) const
{
  const double u = (a - a0_) / h_;
  const double k = kernel_(u);
  if (k == 0.0) {
    return 0.0;
  }
  return (r1_[0] + r1_[1] * u) * k / h_;
}

double GammaWeights::bias_part(double a) const
{
  if (!debias_) {
    return 0.0;
  }
  const double u = (a - a0_) / b_;
  const double k = kernel_(u);
  if (k == 0.0) {
    return 0.0;
  }
  const double tau = h_ / b_;
  const double poly = r3_[0] + u * (r3_[1] + u * (r3_[2] + u * r3_[3]));
  return c2_ * tau * tau * poly * k / b_;
}

GammaWeights gamma_weights(const ConstVectorRef& exposures,
                           double a0,
                           double h,
                           double b,
                           const KernelSpec& kernel,
                           bool debias)
{
  return GammaWeights(exposures, a0, h, b, kernel, debias);
}

VectorXd local_moment_vector(const ConstVectorRef& x,
                             const ConstVectorRef& y,
                             double a0,
                             double h,
                             int order,
                             const KernelSpec& kernel)
{
  if (x.size() != y.size()) {
    throw Error(ErrorKind::LengthMismatch, "x and y lengths differ");
  }
  VectorXd acc = VectorXd::Zero(order + 1);
  for (Index i = 0; i < x.size(); ++i) {
    const double u = (x[i] - a0) / h;
    const double k = kernel(u);
    if (k <= 0.0) {
      continue;
    }
    double p = k * y[i];
    for (int m = 0; m <= order; ++m) {
      acc[m] += p;
      p *= u;
    }
  }
  return acc / (static_cast<double>(x.size()) * h);
}

VectorXd local_poly_fit(const ConstVectorRef& x,
                        const ConstVectorRef& y,
                        double a0,
                        double h,
                        int degree,
                        const KernelSpec& kernel)
{
  if (x.size() != y.size()) {
    throw Error(ErrorKind::LengthMismatch, "x and y lengths differ");
  }
  if (degree != 1 && degree != 3) {
    throw Error(ErrorKind::InvalidConfig, "local polynomial degree must be 1 or 3");
  }
  const DMatrix d = d_matrix(x, a0, h, static_cast<DesignOrder>(degree), kernel);
  return d.solve(local_moment_vector(x, y, a0, h, degree, kernel));
}

} // namespace drcurve
