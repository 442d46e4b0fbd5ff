#pragma once

#include "drcurve/localpoly.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drcurve {

using RowMajorMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! n observations of (outcome y, exposure a, covariates w).
struct Dataset
{
  VectorXd y;
  VectorXd a;
  MatrixXd w;

  Index size() const { return a.size(); }
  Index dim() const { return w.cols(); }

  //! Equal lengths, finite values and n >= 2; throws otherwise.
  void validate() const;
};

double expit(double x);

//! sin(3 pi (2a - 1) / 2) / (a^2 + 1)
double exposure_wave(double a);

enum class TermKind
{
  Intercept,
  Covariate,          // W_k
  Exposure,           // a
  ExposureCovariate,  // a * W_k
  ExposureSquare,     // a^2
  ExposureWave,       // exposure_wave(a)
};

struct FeatureTerm
{
  TermKind kind;
  int index = -1;  // zero-based covariate column for covariate terms

  bool operator==(const FeatureTerm&) const = default;
};

enum class ModelKind { Outcome, Propensity };

//! Declarative list of regression features built from (a, w).
class FeatureMap
{
public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<FeatureTerm> terms) : terms_(std::move(terms)) {}

  const std::vector<FeatureTerm>& terms() const { return terms_; }
  Index size() const { return static_cast<Index>(terms_.size()); }
  bool depends_on_exposure() const;
  bool contains(const FeatureTerm& term) const;
  int max_covariate() const;

  double term_value(const FeatureTerm& t, double a, const double* w) const;
  void evaluate(double a, const double* w, double* out) const;

  std::string describe() const;

  //! 1, W_1..W_d, a, a W_1..a W_d, a^2, T(a)
  static FeatureMap outcome_correct(int d);
  //! W_1..W_d
  static FeatureMap propensity_correct(int d);

private:
  std::vector<FeatureTerm> terms_;
};

//! Feature map dropping W_3, W_4 and their exposure interactions.
FeatureMap misspecified_features(int d, ModelKind kind = ModelKind::Outcome);

enum class Provenance { OracleFromDGP, Fitted, Precomputed, Custom };

std::string_view to_string(Provenance p);

//! A function of (exposure value, covariate row index) bound to the rows of
//! one dataset.
class CovariateFunction
{
public:
  virtual ~CovariateFunction() = default;
  virtual double operator()(double a, Index row) const = 0;
  virtual Index rows() const = 0;
  virtual Provenance provenance() const = 0;

  //! out[i] = f(a, i) for every row.
  virtual void eval_rows(double a, std::span<double> out) const;
};

//! Outcome regression mu(a, w) and standardized propensity g(a, w).
class NuisanceModel
{
public:
  NuisanceModel() = default;
  NuisanceModel(std::shared_ptr<const CovariateFunction> mu,
                std::shared_ptr<const CovariateFunction> g);

  double mu(double a, Index row) const { return (*mu_)(a, row); }
  double g(double a, Index row) const { return (*g_)(a, row); }
  void mu_rows(double a, std::span<double> out) const { mu_->eval_rows(a, out); }

  const CovariateFunction& mu_function() const { return *mu_; }
  const CovariateFunction& g_function() const { return *g_; }
  Provenance mu_provenance() const { return mu_->provenance(); }
  Provenance g_provenance() const { return g_->provenance(); }
  Index rows() const { return mu_->rows(); }

private:
  std::shared_ptr<const CovariateFunction> mu_;
  std::shared_ptr<const CovariateFunction> g_;
};

//! Adapter for arbitrary callables; used for tests and custom models.
class LambdaFunction final : public CovariateFunction
{
public:
  using Fn = std::function<double(double, Index)>;
  LambdaFunction(Fn fn, Index rows, Provenance p = Provenance::Custom)
    : fn_(std::move(fn)), rows_(rows), provenance_(p) {}
  double operator()(double a, Index row) const override { return fn_(a, row); }
  Index rows() const override { return rows_; }
  Provenance provenance() const override { return provenance_; }

private:
  Fn fn_;
  Index rows_;
  Provenance provenance_;
};

//! Bernoulli outcome regression expit(coef' features(a, w)).
class LogisticOutcome final : public CovariateFunction
{
public:
  LogisticOutcome(VectorXd coef, FeatureMap features, const MatrixXd& w,
                  Provenance p = Provenance::Fitted);
  double operator()(double a, Index row) const override;
  void eval_rows(double a, std::span<double> out) const override;
  Index rows() const override { return base_.size(); }
  Provenance provenance() const override { return provenance_; }

  const VectorXd& coefficients() const { return coef_; }
  const FeatureMap& features() const { return features_; }

private:
  double exposure_only(double a) const;

  VectorXd coef_;
  FeatureMap features_;
  // linear predictor = base_[i] + a * slope_[i] + exposure_only(a)
  VectorXd base_;
  VectorXd slope_;
  Provenance provenance_;
};

//! Exposure density p(a | w) = I[0,1](a) [lambda(w) + 2a (1 - lambda(w))]
//! with lambda(w) = 0.1 + 1.8 expit(beta' features(w)), standardized by the
//! marginal f(a) = (1/n) sum_j p(a | W_j).
class LinearDensityPropensity final : public CovariateFunction
{
public:
  LinearDensityPropensity(VectorXd beta, FeatureMap features, const MatrixXd& w,
                          Provenance p = Provenance::Fitted);
  double operator()(double a, Index row) const override;
  Index rows() const override { return lambda_.size(); }
  Provenance provenance() const override { return provenance_; }

  double conditional_density(double a, Index row) const;
  double marginal_density(double a) const;
  const VectorXd& lambda() const { return lambda_; }
  const VectorXd& beta() const { return beta_; }

private:
  VectorXd beta_;
  FeatureMap features_;
  VectorXd lambda_;
  double lambda_mean_ = 1.0;
  Provenance provenance_;
};

//! lambda(w) family used by LinearDensityPropensity.
double density_lambda(double linear_predictor);

struct LogisticFit
{
  VectorXd coef;
  MatrixXd covariance;  // inverse Fisher information
  int iterations = 0;
  std::shared_ptr<const LogisticOutcome> mu;
};

//! Bernoulli maximum likelihood by iteratively reweighted least squares.
LogisticFit fit_outcome_logistic(const Dataset& data, const FeatureMap& features);

struct PropensityFit
{
  VectorXd beta;
  MatrixXd covariance;  // inverse observed information
  int iterations = 0;
  double log_likelihood = 0.0;
  std::shared_ptr<const LinearDensityPropensity> g;
};

//! Maximum likelihood for the linear-in-a exposure density by BFGS.
PropensityFit fit_propensity_mle(const Dataset& data, const FeatureMap& features);

//! Values tabulated on an exposure grid, one column per observation,
//! linearly interpolated in a.
class TabulatedFunction final : public CovariateFunction
{
public:
  TabulatedFunction(VectorXd grid, MatrixXd table);
  double operator()(double a, Index row) const override;
  Index rows() const override { return table_.cols(); }
  Provenance provenance() const override { return Provenance::Precomputed; }

private:
  VectorXd grid_;
  MatrixXd table_;
};

//! Per-observation values g(A_i, W_i); the exposure argument is ignored.
class ObservedValues final : public CovariateFunction
{
public:
  explicit ObservedValues(VectorXd values) : values_(std::move(values)) {}
  double operator()(double, Index row) const override { return values_[row]; }
  Index rows() const override { return values_.size(); }
  Provenance provenance() const override { return Provenance::Precomputed; }

private:
  VectorXd values_;
};

//! mu_table is grid x n; g is either n values observed at (A_i, W_i) or a
//! grid x n table.
NuisanceModel load_precomputed_nuisance(const VectorXd& grid_a,
                                        const MatrixXd& mu_table,
                                        const MatrixXd& g_values);

struct PseudoOutcomeOptions
{
  //! Minimum admissible g(A_i, W_i).
  double g_floor = 1e-6;
  //! Clamp g at this value instead of failing.
  std::optional<double> truncate_g;
  //! Materialize mu(A_j, W_i) for all (j, i) when n does not exceed this.
  Index surface_limit = 2500;
  int threads = 1;
};

//! xi_i = (y_i - mu(A_i, W_i)) / g(A_i, W_i) + m(A_i) with
//! m(a) = (1/n) sum_j mu(a, W_j).
struct PseudoOutcomes
{
  VectorXd xi;
  //! m(A_i)
  VectorXd marginal;
  NuisanceModel model;
  //! Row j holds mu(A_j, W_i) for i = 0..n-1, when materialized.
  std::shared_ptr<const RowMajorMatrixXd> surface;

  double marginal_mu(double a) const;
  Index size() const { return xi.size(); }
};

PseudoOutcomes pseudo_outcomes(const Dataset& data,
                               const NuisanceModel& model,
                               const PseudoOutcomeOptions& options = {});

} // namespace drcurve
