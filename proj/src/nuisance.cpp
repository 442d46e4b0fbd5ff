#include "drcurve/nuisance.hpp"

#include "drcurve/error.hpp"
#include "drcurve/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace drcurve {

void Dataset::validate() const
{
  const Index n = a.size();
  if (y.size() != n || w.rows() != n) {
    std::ostringstream os;
    os << "dataset columns have different lengths (y=" << y.size() << ", a=" << n
       << ", w=" << w.rows() << ")";
    throw Error(ErrorKind::LengthMismatch, os.str());
  }
  if (n < 2) {
    throw Error(ErrorKind::InvalidData, "dataset needs at least two observations");
  }
  if (!y.allFinite() || !a.allFinite() || !w.allFinite()) {
    throw Error(ErrorKind::InvalidData, "dataset contains non-finite values");
  }
}

double expit(double x)
{
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double exposure_wave(double a)
{
  return std::sin(3.0 * std::numbers::pi * (2.0 * a - 1.0) / 2.0) / (a * a + 1.0);
}

// ---------------------------------------------------------------------------
// feature maps

bool FeatureMap::depends_on_exposure() const
{
  return std::any_of(terms_.begin(), terms_.end(), [](const FeatureTerm& t) {
    return t.kind != TermKind::Intercept && t.kind != TermKind::Covariate;
  });
}

bool FeatureMap::contains(const FeatureTerm& term) const
{
  return std::find(terms_.begin(), terms_.end(), term) != terms_.end();
}

int FeatureMap::max_covariate() const
{
  int m = -1;
  for (const auto& t : terms_) {
    m = std::max(m, t.index);
  }
  return m;
}

double FeatureMap::term_value(const FeatureTerm& t, double a, const double* w) const
{
  switch (t.kind) {
    case TermKind::Intercept: return 1.0;
    case TermKind::Covariate: return w[t.index];
    case TermKind::Exposure: return a;
    case TermKind::ExposureCovariate: return a * w[t.index];
    case TermKind::ExposureSquare: return a * a;
    case TermKind::ExposureWave: return exposure_wave(a);
  }
  return 0.0;
}

void FeatureMap::evaluate(double a, const double* w, double* out) const
{
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    out[k] = term_value(terms_[k], a, w);
  }
}

std::string FeatureMap::describe() const
{
  std::ostringstream os;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k > 0) {
      os << ' ';
    }
    const auto& t = terms_[k];
    switch (t.kind) {
      case TermKind::Intercept: os << "1"; break;
      case TermKind::Covariate: os << "W" << t.index + 1; break;
      case TermKind::Exposure: os << "a"; break;
      case TermKind::ExposureCovariate: os << "a*W" << t.index + 1; break;
      case TermKind::ExposureSquare: os << "a^2"; break;
      case TermKind::ExposureWave: os << "T(a)"; break;
    }
  }
  return os.str();
}

namespace {

FeatureMap outcome_features(const std::vector<int>& covariates)
{
  std::vector<FeatureTerm> terms{{TermKind::Intercept}};
  for (int k : covariates) {
    terms.push_back({TermKind::Covariate, k});
  }
  terms.push_back({TermKind::Exposure});
  for (int k : covariates) {
    terms.push_back({TermKind::ExposureCovariate, k});
  }
  terms.push_back({TermKind::ExposureSquare});
  terms.push_back({TermKind::ExposureWave});
  return FeatureMap(std::move(terms));
}

std::vector<int> all_columns(int d)
{
  std::vector<int> cols(d);
  for (int k = 0; k < d; ++k) {
    cols[k] = k;
  }
  return cols;
}

} // namespace

FeatureMap FeatureMap::outcome_correct(int d) { return outcome_features(all_columns(d)); }

FeatureMap FeatureMap::propensity_correct(int d)
{
  std::vector<FeatureTerm> terms;
  for (int k = 0; k < d; ++k) {
    terms.push_back({TermKind::Covariate, k});
  }
  return FeatureMap(std::move(terms));
}

FeatureMap misspecified_features(int d, ModelKind kind)
{
  if (d < 4) {
    throw Error(ErrorKind::DimensionTooSmall,
                "misspecified feature maps need at least 4 covariates");
  }
  // keep every column except W_3 and W_4 (zero-based 2 and 3)
  std::vector<int> kept;
  for (int k = 0; k < d; ++k) {
    if (k != 2 && k != 3) {
      kept.push_back(k);
    }
  }
  if (kind == ModelKind::Outcome) {
    return outcome_features(kept);
  }
  std::vector<FeatureTerm> terms{{TermKind::Intercept}};
  for (int k : kept) {
    terms.push_back({TermKind::Covariate, k});
  }
  return FeatureMap(std::move(terms));
}

std::string_view to_string(Provenance p)
{
  switch (p) {
    case Provenance::OracleFromDGP: return "oracle";
    case Provenance::Fitted: return "fitted";
    case Provenance::Precomputed: return "precomputed";
    case Provenance::Custom: return "custom";
  }
  return "unknown";
}

void CovariateFunction::eval_rows(double a, std::span<double> out) const
{
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (*this)(a, static_cast<Index>(i));
  }
}

NuisanceModel::NuisanceModel(std::shared_ptr<const CovariateFunction> mu,
                             std::shared_ptr<const CovariateFunction> g)
  : mu_(std::move(mu)), g_(std::move(g))
{
  if (!mu_ || !g_) {
    throw Error(ErrorKind::InvalidConfig, "nuisance model needs both mu and g");
  }
  if (mu_->rows() != g_->rows()) {
    throw Error(ErrorKind::ShapeMismatch, "mu and g are bound to different row counts");
  }
}

// ---------------------------------------------------------------------------
// logistic outcome regression

namespace {

void check_feature_columns(const FeatureMap& features, const MatrixXd& w)
{
  if (features.max_covariate() >= w.cols()) {
    throw Error(ErrorKind::DimensionTooSmall,
                "feature map references covariate W" +
                  std::to_string(features.max_covariate() + 1) + " but data has " +
                  std::to_string(w.cols()) + " columns");
  }
}

MatrixXd design_matrix(const FeatureMap& features, const VectorXd& a, const MatrixXd& w)
{
  const Index n = a.size();
  MatrixXd x(n, features.size());
  Eigen::RowVectorXd row(w.cols());
  VectorXd buf(features.size());
  for (Index i = 0; i < n; ++i) {
    row = w.row(i);
    features.evaluate(a[i], row.data(), buf.data());
    x.row(i) = buf.transpose();
  }
  return x;
}

void check_rank(const MatrixXd& x)
{
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw Error(ErrorKind::RankDeficientDesign,
                "design matrix has rank " + std::to_string(qr.rank()) + " < " +
                  std::to_string(x.cols()));
  }
}

} // namespace

LogisticOutcome::LogisticOutcome(VectorXd coef, FeatureMap features, const MatrixXd& w,
                                 Provenance p)
  : coef_(std::move(coef)), features_(std::move(features)), provenance_(p)
{
  if (coef_.size() != features_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "coefficient and feature counts differ");
  }
  check_feature_columns(features_, w);
  const Index n = w.rows();
  base_ = VectorXd::Zero(n);
  slope_ = VectorXd::Zero(n);
  for (std::size_t k = 0; k < features_.terms().size(); ++k) {
    const auto& t = features_.terms()[k];
    switch (t.kind) {
      case TermKind::Intercept: base_.array() += coef_[k]; break;
      case TermKind::Covariate: base_ += coef_[k] * w.col(t.index); break;
      case TermKind::Exposure: slope_.array() += coef_[k]; break;
      case TermKind::ExposureCovariate: slope_ += coef_[k] * w.col(t.index); break;
      default: break;
    }
  }
}

double LogisticOutcome::exposure_only(double a) const
{
  double s = 0.0;
  for (std::size_t k = 0; k < features_.terms().size(); ++k) {
    const auto kind = features_.terms()[k].kind;
    if (kind == TermKind::ExposureSquare) {
      s += coef_[k] * a * a;
    } else if (kind == TermKind::ExposureWave) {
      s += coef_[k] * exposure_wave(a);
    }
  }
  return s;
}

double LogisticOutcome::operator()(double a, Index row) const
{
  return expit(base_[row] + a * slope_[row] + exposure_only(a));
}

void LogisticOutcome::eval_rows(double a, std::span<double> out) const
{
  // exp(-x) overflows to inf for very negative x, which still yields 0
  Eigen::Map<Eigen::ArrayXd> o(out.data(), static_cast<Index>(out.size()));
  o = -(base_.array() + a * slope_.array() + exposure_only(a));
  o = (1.0 + o.exp()).inverse();
}

LogisticFit fit_outcome_logistic(const Dataset& data, const FeatureMap& features)
{
  data.validate();
  check_feature_columns(features, data.w);
  for (Index i = 0; i < data.size(); ++i) {
    if (data.y[i] != 0.0 && data.y[i] != 1.0) {
      throw Error(ErrorKind::InvalidData, "logistic outcome model needs binary outcomes");
    }
  }
  const MatrixXd x = design_matrix(features, data.a, data.w);
  check_rank(x);

  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-8;
  constexpr double kSeparationBound = 50.0;
  constexpr double kRidge = 1e-10;

  const Index p = x.cols();
  VectorXd beta = VectorXd::Zero(p);
  MatrixXd info(p, p);
  for (int it = 1; it <= kMaxIterations; ++it) {
    const VectorXd eta = x * beta;
    VectorXd prob(eta.size());
    VectorXd weight(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      prob[i] = expit(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    info = x.transpose() * weight.asDiagonal() * x;
    const VectorXd score = x.transpose() * (data.y - prob);

    Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= kRidge * info.diagonal().maxCoeff()) {
      info.diagonal().array() += kRidge;
      ldlt.compute(info);
    }
    const VectorXd step = ldlt.solve(score);
    beta += step;

    if (!beta.allFinite() || beta.cwiseAbs().maxCoeff() > kSeparationBound) {
      throw Error(ErrorKind::Separation,
                  "logistic likelihood appears unbounded (coefficient magnitude above 50)");
    }
    if (step.cwiseAbs().maxCoeff() < kTolerance) {
      LogisticFit fit;
      fit.coef = beta;
      fit.iterations = it;
      fit.covariance = info.inverse();
      fit.mu = std::make_shared<LogisticOutcome>(beta, features, data.w);
      return fit;
    }
  }
  throw Error(ErrorKind::NonConvergence, "IRLS did not converge in 100 iterations");
}

// ---------------------------------------------------------------------------
// linear-in-a exposure density

double density_lambda(double linear_predictor) { return 0.1 + 1.8 * expit(linear_predictor); }

LinearDensityPropensity::LinearDensityPropensity(VectorXd beta, FeatureMap features,
                                                 const MatrixXd& w, Provenance p)
  : beta_(std::move(beta)), features_(std::move(features)), provenance_(p)
{
  if (beta_.size() != features_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "coefficient and feature counts differ");
  }
  if (features_.depends_on_exposure()) {
    throw Error(ErrorKind::InvalidConfig, "propensity features must not involve the exposure");
  }
  check_feature_columns(features_, w);
  const MatrixXd x = design_matrix(features_, VectorXd::Zero(w.rows()), w);
  const VectorXd eta = x * beta_;
  lambda_ = eta.unaryExpr([](double e) { return density_lambda(e); });
  lambda_mean_ = lambda_.mean();
}

double LinearDensityPropensity::conditional_density(double a, Index row) const
{
  if (a < 0.0 || a > 1.0) {
    return 0.0;
  }
  return lambda_[row] + 2.0 * a * (1.0 - lambda_[row]);
}

double LinearDensityPropensity::marginal_density(double a) const
{
  if (a < 0.0 || a > 1.0) {
    return 0.0;
  }
  return lambda_mean_ + 2.0 * a * (1.0 - lambda_mean_);
}

double LinearDensityPropensity::operator()(double a, Index row) const
{
  const double f = marginal_density(a);
  return f > 0.0 ? conditional_density(a, row) / f : 0.0;
}

namespace {

struct DensityLikelihood
{
  const MatrixXd& x;
  const VectorXd& a;

  // mean log-likelihood and its gradient
  double operator()(const VectorXd& beta, VectorXd& grad) const
  {
    const Index n = x.rows();
    const VectorXd eta = x * beta;
    VectorXd deta(n);
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double s = expit(eta[i]);
      const double lambda = 0.1 + 1.8 * s;
      const double p = lambda + 2.0 * a[i] * (1.0 - lambda);
      ll += std::log(p);
      deta[i] = (1.0 - 2.0 * a[i]) * 1.8 * s * (1.0 - s) / p;
    }
    grad = x.transpose() * deta / static_cast<double>(n);
    return ll / static_cast<double>(n);
  }

  MatrixXd hessian(const VectorXd& beta) const
  {
    const Index n = x.rows();
    const VectorXd eta = x * beta;
    VectorXd curv(n);
    for (Index i = 0; i < n; ++i) {
      const double s = expit(eta[i]);
      const double lambda = 0.1 + 1.8 * s;
      const double p = lambda + 2.0 * a[i] * (1.0 - lambda);
      const double d1 = 1.8 * s * (1.0 - s);
      const double d2 = d1 * (1.0 - 2.0 * s);
      const double c = 1.0 - 2.0 * a[i];
      curv[i] = c * d2 / p - (c * d1 / p) * (c * d1 / p);
    }
    return x.transpose() * curv.asDiagonal() * x;
  }
};

} // namespace

PropensityFit fit_propensity_mle(const Dataset& data, const FeatureMap& features)
{
  data.validate();
  check_feature_columns(features, data.w);
  if (features.depends_on_exposure()) {
    throw Error(ErrorKind::InvalidConfig, "propensity features must not involve the exposure");
  }
  if (data.a.minCoeff() < 0.0 || data.a.maxCoeff() > 1.0) {
    throw Error(ErrorKind::ExposureOutOfRange,
                "linear exposure density model needs exposures in [0, 1]");
  }
  const MatrixXd x = design_matrix(features, VectorXd::Zero(data.size()), data.w);
  check_rank(x);

  constexpr int kMaxIterations = 500;
  constexpr double kGradTolerance = 1e-8;

  const DensityLikelihood objective{x, data.a};
  const Index p = x.cols();
  VectorXd beta = VectorXd::Zero(p);
  VectorXd grad(p);
  double value = objective(beta, grad);
  // inverse Hessian approximation of the negative objective
  MatrixXd hinv = MatrixXd::Identity(p, p);

  for (int it = 1; it <= kMaxIterations; ++it) {
    if (grad.cwiseAbs().maxCoeff() < kGradTolerance) {
      PropensityFit fit;
      fit.beta = beta;
      fit.iterations = it - 1;
      fit.log_likelihood = value * static_cast<double>(data.size());
      fit.covariance = (-objective.hessian(beta)).inverse();
      fit.g = std::make_shared<LinearDensityPropensity>(beta, features, data.w);
      return fit;
    }
    // ascent direction
    VectorXd dir = hinv * grad;
    if (dir.dot(grad) <= 0.0) {
      hinv.setIdentity();
      dir = grad;
    }
    double step = 1.0;
    VectorXd next_beta;
    VectorXd next_grad(p);
    double next_value = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next_beta = beta + step * dir;
      next_value = objective(next_beta, next_grad);
      if (std::isfinite(next_value) && next_value >= value + 1e-4 * step * grad.dot(dir)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      break;
    }
    const VectorXd s = next_beta - beta;
    // curvature pair for the negative objective
    const VectorXd yv = grad - next_grad;
    const double sy = s.dot(yv);
    if (sy > 1e-300) {
      const double rho = 1.0 / sy;
      const MatrixXd ident = MatrixXd::Identity(p, p);
      hinv = (ident - rho * s * yv.transpose()) * hinv * (ident - rho * yv * s.transpose()) +
             rho * s * s.transpose();
    }
    beta = next_beta;
    grad = next_grad;
    value = next_value;
  }
  throw Error(ErrorKind::NonConvergence,
              "exposure density maximum likelihood did not converge in 500 iterations");
}

// ---------------------------------------------------------------------------
// precomputed tables

TabulatedFunction::TabulatedFunction(VectorXd grid, MatrixXd table)
  : grid_(std::move(grid)), table_(std::move(table))
{
  if (grid_.size() < 2) {
    throw Error(ErrorKind::ShapeMismatch, "precomputed grid needs at least two nodes");
  }
  if (table_.rows() != grid_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "table rows must match the grid length");
  }
  for (Index k = 1; k < grid_.size(); ++k) {
    if (!(grid_[k] > grid_[k - 1])) {
      throw Error(ErrorKind::InvalidData, "precomputed grid must be strictly increasing");
    }
  }
}

double TabulatedFunction::operator()(double a, Index row) const
{
  const Index m = grid_.size();
  if (!(a >= grid_[0] && a <= grid_[m - 1])) {
    std::ostringstream os;
    os << "exposure " << a << " outside precomputed grid [" << grid_[0] << ", "
       << grid_[m - 1] << "]";
    throw Error(ErrorKind::GridCoverage, os.str());
  }
  const double* begin = grid_.data();
  Index hi = std::upper_bound(begin, begin + m, a) - begin;
  if (hi >= m) {
    return table_(m - 1, row);
  }
  const Index lo = hi - 1;
  const double t = (a - grid_[lo]) / (grid_[hi] - grid_[lo]);
  return (1.0 - t) * table_(lo, row) + t * table_(hi, row);
}

NuisanceModel load_precomputed_nuisance(const VectorXd& grid_a,
                                        const MatrixXd& mu_table,
                                        const MatrixXd& g_values)
{
  auto mu = std::make_shared<TabulatedFunction>(grid_a, mu_table);
  std::shared_ptr<const CovariateFunction> g;
  if (g_values.cols() == 1 || g_values.rows() == 1) {
    VectorXd v = g_values.reshaped();
    if (v.size() != mu_table.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "g values must have one entry per observation");
    }
    g = std::make_shared<ObservedValues>(std::move(v));
  } else {
    if (g_values.cols() != mu_table.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "g table must have one column per observation");
    }
    g = std::make_shared<TabulatedFunction>(grid_a, g_values);
  }
  return NuisanceModel(std::move(mu), std::move(g));
}

// ---------------------------------------------------------------------------
// pseudo-outcomes

double PseudoOutcomes::marginal_mu(double a) const
{
  const Index n = model.rows();
  std::vector<double> row(n);
  model.mu_rows(a, row);
  double s = 0.0;
  for (double v : row) {
    s += v;
  }
  return s / static_cast<double>(n);
}

PseudoOutcomes pseudo_outcomes(const Dataset& data,
                               const NuisanceModel& model,
                               const PseudoOutcomeOptions& options)
{
  data.validate();
  const Index n = data.size();
  if (model.rows() != n) {
    throw Error(ErrorKind::ShapeMismatch, "nuisance model is bound to a different dataset");
  }
  if (options.truncate_g && !(*options.truncate_g > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "g truncation level must be positive");
  }

  PseudoOutcomes out;
  out.model = model;
  out.xi.resize(n);
  out.marginal.resize(n);

  std::shared_ptr<RowMajorMatrixXd> surface;
  if (n <= options.surface_limit) {
    surface = std::make_shared<RowMajorMatrixXd>(n, n);
  }

  parallel_for(n, options.threads, [&](std::int64_t j) {
    std::vector<double> scratch;
    std::span<double> row;
    if (surface) {
      row = std::span<double>(surface->row(j).data(), static_cast<std::size_t>(n));
    } else {
      scratch.resize(n);
      row = scratch;
    }
    model.mu_rows(data.a[j], row);
    double s = 0.0;
    for (double v : row) {
      s += v;
    }
    out.marginal[j] = s / static_cast<double>(n);
  });

  for (Index i = 0; i < n; ++i) {
    const double mu = model.mu(data.a[i], i);
    if (!std::isfinite(mu) || std::abs(mu) > 1e6) {
      throw Error(ErrorKind::InvalidData,
                  "outcome regression value out of bounds at observation " + std::to_string(i));
    }
    double g = model.g(data.a[i], i);
    if (!std::isfinite(g)) {
      throw Error(ErrorKind::InvalidData,
                  "non-finite propensity at observation " + std::to_string(i));
    }
    if (options.truncate_g) {
      g = std::max(g, *options.truncate_g);
    } else if (g < options.g_floor) {
      std::ostringstream os;
      os << "standardized propensity " << g << " below floor " << options.g_floor
         << " at observation " << i << " (use truncation to clamp)";
      throw Error(ErrorKind::PropensityTooSmall, os.str());
    }
    out.xi[i] = (data.y[i] - mu) / g + out.marginal[i];
  }
  out.surface = std::move(surface);
  return out;
}

} // namespace drcurve
