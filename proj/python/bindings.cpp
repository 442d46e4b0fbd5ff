#include "drcurve/bandwidth.hpp"
#include "drcurve/cli.hpp"
#include "drcurve/error.hpp"
#include "drcurve/estimator.hpp"
#include "drcurve/inference.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace drcurve;

namespace {

Dataset make_dataset(const VectorXd& y, const VectorXd& a, const MatrixXd& w)
{
  Dataset d;
  d.y = y;
  d.a = a;
  d.w = w;
  d.validate();
  return d;
}

PseudoOutcomes prepare(const Dataset& d, const std::string& nuisance,
                       std::optional<double> truncate_g, int threads)
{
  NuisanceModel model;
  if (nuisance == "fit") {
    const int dim = static_cast<int>(d.dim());
    model = NuisanceModel(fit_outcome_logistic(d, FeatureMap::outcome_correct(dim)).mu,
                          fit_propensity_mle(d, FeatureMap::propensity_correct(dim)).g);
  } else if (nuisance == "oracle") {
    model = oracle_nuisance(DGPSpec{}, d.w);
  } else {
    throw Error(ErrorKind::InvalidConfig, "nuisance must be 'fit' or 'oracle'");
  }
  PseudoOutcomeOptions po;
  po.truncate_g = truncate_g;
  po.threads = threads;
  return pseudo_outcomes(d, model, po);
}

std::vector<PointInference> curve(const Dataset& d, const PseudoOutcomes& xi,
                                  const std::vector<double>& grid, double h, double b,
                                  const KernelSpec& k, bool debias, int threads)
{
  CurveOptions opt;
  opt.debias = debias;
  opt.threads = threads;
  CurveResult r = estimate_curve(d, xi, grid, h, b, k, opt);
  if (!r.failures.empty()) {
    throw Error(ErrorKind::SingularWindow, r.failures.front().reason);
  }
  return std::move(r.points);
}

py::dict estimate(const VectorXd& y, const VectorXd& a, const MatrixXd& w,
                  const std::vector<double>& grid, double h, std::optional<double> b,
                  const std::string& kernel, const std::string& nuisance, bool debias,
                  double alpha, std::optional<double> truncate_g, int threads)
{
  const Dataset d = make_dataset(y, a, w);
  const PseudoOutcomes xi = prepare(d, nuisance, truncate_g, threads);
  const auto pts = curve(d, xi, grid, h, b.value_or(h), parse_kernel(kernel), debias, threads);
  std::vector<double> theta, se, lower, upper, theta_ll, theta2;
  for (const auto& p : pts) {
    const Interval ci = pointwise_ci(p, d.size(), alpha);
    theta.push_back(p.theta_hat);
    se.push_back(ci.se);
    lower.push_back(ci.lower);
    upper.push_back(ci.upper);
    theta_ll.push_back(p.theta_ll);
    theta2.push_back(p.theta2_hat);
  }
  py::dict out;
  out["grid"] = grid;
  out["theta"] = theta;
  out["se"] = se;
  out["lower"] = lower;
  out["upper"] = upper;
  out["theta_ll"] = theta_ll;
  out["theta2"] = theta2;
  return out;
}

py::dict band(const VectorXd& y, const VectorXd& a, const MatrixXd& w,
              const std::vector<double>& grid, double h, std::optional<double> b,
              std::uint64_t seed, std::int64_t draws, const std::string& kernel,
              const std::string& nuisance, double alpha, bool diagonal, int threads)
{
  const Dataset d = make_dataset(y, a, w);
  const PseudoOutcomes xi = prepare(d, nuisance, std::nullopt, threads);
  const auto pts = curve(d, xi, grid, h, b.value_or(h), parse_kernel(kernel), true, threads);
  const BandResult r =
    uniform_band(pts, d.size(), alpha, draws, seed, threads,
                 diagonal ? CovarianceForm::Diagonal : CovarianceForm::InfluenceFunction);
  py::dict out;
  out["grid"] = r.grid;
  out["theta"] = r.theta_hat;
  out["se"] = r.se;
  out["lower"] = r.lower;
  out["upper"] = r.upper;
  out["lower_pointwise"] = r.lower_pointwise;
  out["upper_pointwise"] = r.upper_pointwise;
  out["t_quantile"] = r.t_quantile;
  out["warnings"] = r.warnings;
  return out;
}

py::dict select_bandwidth(const VectorXd& y, const VectorXd& a, const MatrixXd& w,
                          const std::string& method, double tau, const std::string& kernel,
                          const std::string& nuisance, int threads)
{
  const Dataset d = make_dataset(y, a, w);
  const PseudoOutcomes xi = prepare(d, nuisance, std::nullopt, threads);
  const KernelSpec k = parse_kernel(kernel);
  BandwidthPair pair;
  if (method == "plugin") {
    const auto comps = plugin_components(d, xi, k, rule_of_thumb_bandwidth(d.a),
                                         default_knn_k(d.size()), default_omega_grid(d.a));
    pair = select_plugin(comps, d.size(), tau);
  } else if (method == "loocv" || method == "loocv-fixed-tau") {
    LoocvSearch s;
    s.mode = method == "loocv" ? LoocvMode::Joint : LoocvMode::FixedTau;
    s.tau = tau;
    s.h_grid = default_loocv_grid(d.a);
    s.b_grid = s.h_grid;
    s.threads = threads;
    pair = select_loocv(d, xi, k, s).pair;
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown bandwidth method '" + method + "'");
  }
  py::dict out;
  out["h"] = pair.h;
  out["b"] = pair.b;
  out["tau"] = pair.tau;
  out["method"] = std::string(to_string(pair.method));
  return out;
}

py::tuple run_cli(std::vector<std::string> args)
{
  args.insert(args.begin(), "drcurve");
  std::vector<const char*> argv;
  for (const auto& s : args) {
    argv.push_back(s.c_str());
  }
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return py::make_tuple(code, out.str(), err.str());
}

} // namespace

PYBIND11_MODULE(_drcurve, m)
{
  m.doc() = "Debiased doubly robust dose-response curve estimation";

  static py::exception<Error> error(m, "DrcurveError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
      PyErr_SetString(error.ptr(), msg.c_str());
    }
  });

  m.attr("__version__") = cli::kVersion;

  m.def(
    "kernel_constants",
    [](const std::string& kernel) {
      const KernelConstants kc = kernel_constants(parse_kernel(kernel));
      py::dict out;
      out["c"] = std::vector<double>(kc.c.begin(), kc.c.end());
      out["cstar"] = std::vector<double>(kc.cstar.begin(), kc.cstar.end());
      return out;
    },
    py::arg("kernel") = "epanechnikov");
  m.def(
    "v_k_tau",
    [](const std::string& kernel, double tau, bool expanded) {
      const KernelSpec k = parse_kernel(kernel);
      return expanded ? v_k_tau_expanded(k, tau) : v_k_tau(k, tau);
    },
    py::arg("kernel"), py::arg("tau"), py::arg("expanded") = false);

  m.def(
    "draw_dataset",
    [](Index n, std::uint64_t seed) {
      const Dataset d = draw_dataset(n, seed);
      py::dict out;
      out["y"] = d.y;
      out["a"] = d.a;
      out["w"] = d.w;
      return out;
    },
    py::arg("n"), py::arg("seed"));
  m.def(
    "true_theta", [](double a) { return true_theta(a); }, py::arg("a"));

  m.def("estimate", &estimate, py::arg("y"), py::arg("a"), py::arg("w"), py::arg("grid"),
        py::arg("h"), py::arg("b") = std::nullopt, py::arg("kernel") = "epanechnikov",
        py::arg("nuisance") = "fit", py::arg("debias") = true, py::arg("alpha") = 0.05,
        py::arg("truncate_g") = std::nullopt, py::arg("threads") = 1);
  m.def("band", &band, py::arg("y"), py::arg("a"), py::arg("w"), py::arg("grid"), py::arg("h"),
        py::arg("b") = std::nullopt, py::arg("seed"), py::arg("draws") = 20000,
        py::arg("kernel") = "epanechnikov", py::arg("nuisance") = "fit",
        py::arg("alpha") = 0.05, py::arg("diagonal") = false, py::arg("threads") = 1);
  m.def("select_bandwidth", &select_bandwidth, py::arg("y"), py::arg("a"), py::arg("w"),
        py::arg("method") = "plugin", py::arg("tau") = 1.0, py::arg("kernel") = "epanechnikov",
        py::arg("nuisance") = "fit", py::arg("threads") = 1);
  m.def("run_cli", &run_cli, py::arg("args"),
        "Runs the command-line tool in-process and returns (exit code, stdout, stderr).");
}
