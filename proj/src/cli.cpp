#include "drcurve/cli.hpp"

#include "drcurve/bandwidth.hpp"
#include "drcurve/error.hpp"
#include "drcurve/estimator.hpp"
#include "drcurve/inference.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/parallel.hpp"
#include "drcurve/simulation.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

namespace drcurve::cli {

using io::json;

namespace {

// ---------------------------------------------------------------------------
// typed JSON access

template <class T>
T read_value(const json& j, const std::string& key, const std::string& context)
{
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidConfig, "invalid value for '" + key + "' in " + context);
  }
}

template <class T>
void read_into(const json& j, const std::string& key, T& target, const std::string& context)
{
  if (j.contains(key)) {
    target = read_value<T>(j, key, context);
  }
}

template <class T>
void read_into(const json& j, const std::string& key, std::optional<T>& target,
               const std::string& context)
{
  if (j.contains(key) && !j.at(key).is_null()) {
    target = read_value<T>(j, key, context);
  }
}

template <class T>
json optional_json(const std::optional<T>& v)
{
  return v ? json(*v) : json(nullptr);
}

const std::vector<std::string> kRunKeys = {
  "input",     "y",          "a",          "w",          "kernel",     "estimator",
  "bandwidth", "h",          "b",          "tau",        "h_grid",     "b_grid",
  "pilot_h1",  "knn_k",      "omega_size", "nuisance",   "mu_file",    "g_file",
  "grid",      "grid_lower", "grid_upper", "grid_size",  "alpha",      "draws",
  "seed",      "truncate_g", "fast_eif",   "covariance", "out"};

// ---------------------------------------------------------------------------
// flag registry: options given on the command line override the config file

class FlagSet
{
public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& name, const std::string& key,
                      const std::string& help)
  {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *holder, help);
    items_.push_back({opt, [holder, key](json& j) { j[key] = *holder; }});
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& key, bool value,
                    const std::string& help)
  {
    CLI::Option* opt = app->add_flag(name, help);
    items_.push_back({opt, [key, value](json& j) { j[key] = value; }});
    return opt;
  }

  void apply(json& j) const
  {
    for (const auto& [opt, fn] : items_) {
      if (opt->count() > 0) {
        fn(j);
      }
    }
  }

private:
  std::vector<std::pair<CLI::Option*, std::function<void(json&)>>> items_;
};

struct Invocation
{
  std::string config_path;
  int threads = 0;
  FlagSet flags;
};

void add_run_flags(CLI::App* app, Invocation& inv, bool band)
{
  auto& f = inv.flags;
  app->add_option("--config", inv.config_path, "JSON run configuration");
  app->add_option("--threads", inv.threads, "Worker threads (default: DRCURVE_THREADS or all cores)");
  f.option<std::string>(app, "--input,-i", "input", "Input CSV file");
  f.option<std::string>(app, "--y", "y", "Outcome column");
  f.option<std::string>(app, "--a", "a", "Exposure column");
  f.option<std::vector<std::string>>(app, "--w", "w", "Covariate columns, comma separated")
    ->delimiter(',');
  f.option<std::string>(app, "--kernel", "kernel", "epanechnikov, triangular or truncated-gaussian");
  f.option<std::string>(app, "--estimator", "estimator", "debiased or local-linear");
  f.option<std::string>(app, "--bandwidth", "bandwidth", "manual, plugin, loocv or loocv-fixed-tau");
  f.option<double>(app, "--h", "h", "Manual bandwidth h");
  f.option<double>(app, "--b", "b", "Manual bandwidth b");
  f.option<double>(app, "--tau", "tau", "Bandwidth ratio h/b");
  f.option<std::vector<double>>(app, "--h-grid", "h_grid", "LOOCV grid for h")->delimiter(',');
  f.option<std::vector<double>>(app, "--b-grid", "b_grid", "LOOCV grid for b")->delimiter(',');
  f.option<double>(app, "--pilot-h1", "pilot_h1", "Pilot bandwidth for the plug-in rule");
  f.option<std::int64_t>(app, "--knn-k", "knn_k", "Neighbours for the variance estimate");
  f.option<std::int64_t>(app, "--omega-size", "omega_size", "Plug-in averaging grid size");
  f.option<std::string>(app, "--nuisance", "nuisance", "fit, precomputed or oracle");
  f.option<std::string>(app, "--mu-file", "mu_file", "Precomputed outcome regression CSV");
  f.option<std::string>(app, "--g-file", "g_file", "Precomputed propensity CSV");
  f.option<std::vector<double>>(app, "--grid", "grid", "Evaluation points")->delimiter(',');
  f.option<double>(app, "--grid-lower", "grid_lower", "Lower end of the evaluation grid");
  f.option<double>(app, "--grid-upper", "grid_upper", "Upper end of the evaluation grid");
  f.option<std::int64_t>(app, "--grid-size", "grid_size", "Number of evaluation points");
  f.option<double>(app, "--alpha", "alpha", "Significance level");
  f.option<double>(app, "--truncate-g", "truncate_g", "Clamp g from below instead of failing");
  f.flag(app, "--fast-eif", "fast_eif", true, "Skip zero weights in the influence function");
  f.flag(app, "--no-fast-eif", "fast_eif", false, "Visit every observation");
  f.flag(app, "--diagonal-covariance", "covariance", false, "Use the diagonal covariance");
  f.option<std::string>(app, "--out,-o", "out", "Output prefix");
  if (band) {
    f.option<std::int64_t>(app, "--draws", "draws", "Gaussian draws for the band quantile");
    f.option<std::uint64_t>(app, "--seed", "seed", "Random seed (required)");
  }
}

json merged_config(const Invocation& inv)
{
  json j = inv.config_path.empty() ? json::object() : io::read_json(inv.config_path);
  if (!j.is_object()) {
    throw Error(ErrorKind::InvalidConfig, "run configuration must be a JSON object");
  }
  inv.flags.apply(j);
  // the diagonal flag stores false; translate to the named form
  if (j.contains("covariance") && j["covariance"].is_boolean()) {
    j["covariance"] = "diagonal";
  }
  return j;
}

// ---------------------------------------------------------------------------
// shared pipeline

struct Prepared
{
  Dataset data;
  NuisanceModel model;
  PseudoOutcomes xi;
  KernelSpec kernel;
};

Prepared prepare(const RunConfig& c, int threads)
{
  if (c.input.empty()) {
    throw Error(ErrorKind::InvalidConfig, "no input file given (--input)");
  }
  Prepared p;
  p.kernel = parse_kernel(c.kernel);
  const io::Table table = io::read_csv(c.input);
  std::vector<std::string> w = c.w;
  if (w.empty()) {
    for (const auto& name : table.columns) {
      if (name != c.y && name != c.a) {
        w.push_back(name);
      }
    }
  }
  p.data = io::dataset_from_table(table, c.y, c.a, w);

  if (c.nuisance == "fit") {
    const int d = static_cast<int>(p.data.dim());
    auto mu = fit_outcome_logistic(p.data, FeatureMap::outcome_correct(d)).mu;
    auto g = fit_propensity_mle(p.data, FeatureMap::propensity_correct(d)).g;
    p.model = NuisanceModel(std::move(mu), std::move(g));
  } else if (c.nuisance == "precomputed") {
    if (c.mu_file.empty() || c.g_file.empty()) {
      throw Error(ErrorKind::InvalidConfig, "precomputed nuisance needs mu_file and g_file");
    }
    p.model = io::read_precomputed_nuisance(c.mu_file, c.g_file, p.data.size());
  } else if (c.nuisance == "oracle") {
    p.model = oracle_nuisance(DGPSpec{}, p.data.w);
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown nuisance source '" + c.nuisance + "'");
  }

  PseudoOutcomeOptions po;
  po.truncate_g = c.truncate_g;
  po.threads = threads;
  p.xi = pseudo_outcomes(p.data, p.model, po);
  return p;
}

bool debiased(const RunConfig& c)
{
  if (c.estimator == "debiased") {
    return true;
  }
  if (c.estimator == "local-linear") {
    return false;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown estimator '" + c.estimator + "'");
}

struct BandwidthOutcome
{
  BandwidthPair pair;
  json details = json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

BandwidthOutcome resolve_bandwidth(const RunConfig& c, const Prepared& p, int threads)
{
  BandwidthOutcome o;
  const bool debias = debiased(c);
  if (c.bandwidth == "manual") {
    if (!c.h) {
      throw Error(ErrorKind::InvalidConfig, "manual bandwidth needs h");
    }
    const double b = c.b ? *c.b : *c.h / c.tau;
    o.pair = BandwidthPair::make(*c.h, b, BandwidthMethod::Manual);
  } else if (c.bandwidth == "plugin") {
    const double h1 = c.pilot_h1 ? *c.pilot_h1 : rule_of_thumb_bandwidth(p.data.a);
    const Index k = c.knn_k ? static_cast<Index>(*c.knn_k) : default_knn_k(p.data.size());
    const auto comps = plugin_components(p.data, p.xi, p.kernel, h1, k,
                                         default_omega_grid(p.data.a, c.omega_size));
    o.pair = select_plugin(comps, p.data.size(), c.tau);
    o.details["pilot_h1"] = h1;
    o.details["knn_k"] = k;
    o.details["omega_dropped"] = comps.dropped;
    o.columns = {"omega", "theta2", "b_hat", "v_hat"};
    for (std::size_t r = 0; r < comps.omega.size(); ++r) {
      o.rows.push_back({comps.omega[r], comps.theta2[r], comps.b_hat[r], comps.v_hat[r]});
    }
  } else if (c.bandwidth == "loocv" || c.bandwidth == "loocv-fixed-tau") {
    LoocvSearch s;
    s.mode = c.bandwidth == "loocv" ? LoocvMode::Joint : LoocvMode::FixedTau;
    s.tau = c.tau;
    s.h_grid = c.h_grid.empty() ? default_loocv_grid(p.data.a) : c.h_grid;
    s.b_grid = c.b_grid.empty() ? s.h_grid : c.b_grid;
    s.debias = debias;
    s.threads = threads;
    const LoocvSelection sel = select_loocv(p.data, p.xi, p.kernel, s);
    o.pair = sel.pair;
    o.details["infeasible_cells"] = sel.infeasible;
    o.columns = {"h", "b", "feasible", "imse"};
    for (const auto& cell : sel.surface) {
      o.rows.push_back({cell.h, cell.b, cell.feasible ? 1.0 : 0.0,
                        cell.feasible ? cell.imse : std::nan("")});
    }
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown bandwidth method '" + c.bandwidth + "'");
  }
  if (!debias && c.bandwidth != "manual") {
    o.pair.b = o.pair.h;
    o.pair.tau = 1.0;
  }
  return o;
}

json bandwidth_json(const BandwidthPair& bw)
{
  return json{{"h", bw.h}, {"b", bw.b}, {"tau", bw.tau}, {"method", to_string(bw.method)}};
}

std::vector<double> resolve_grid(const RunConfig& c, const Dataset& data, Index default_size)
{
  if (!c.grid.empty()) {
    return c.grid;
  }
  const double lo = c.grid_lower ? *c.grid_lower : empirical_quantile(data.a, 0.05);
  const double hi = c.grid_upper ? *c.grid_upper : empirical_quantile(data.a, 0.95);
  const Index size = c.grid_size ? static_cast<Index>(*c.grid_size) : default_size;
  if (size < 1 || !(lo <= hi)) {
    throw Error(ErrorKind::InvalidConfig, "invalid evaluation grid bounds or size");
  }
  std::vector<double> g(size);
  for (Index k = 0; k < size; ++k) {
    g[k] = size == 1 ? 0.5 * (lo + hi)
                     : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(size - 1);
  }
  return g;
}

void require_points(const CurveResult& curve)
{
  if (curve.failures.empty()) {
    return;
  }
  std::ostringstream os;
  os << curve.failures.size() << " grid point(s) failed:";
  for (const auto& f : curve.failures) {
    os << " a0=" << f.a0;
  }
  os << " (" << curve.failures.front().reason << ")";
  throw Error(ErrorKind::SingularWindow, os.str());
}

// ---------------------------------------------------------------------------
// output

struct Outputs
{
  json manifest;
  json result;
  std::vector<std::string> csv_columns;
  std::vector<std::vector<double>> csv_rows;
  //! Pre-rendered CSV body used instead of csv_rows when set.
  std::string csv_text;
};

json base_manifest(const std::string& command, json config)
{
  // output locations and worker counts do not affect results
  config.erase("out");
  return json{{"command", command}, {"version", kVersion}, {"config", config}};
}

void emit(const std::string& prefix, Outputs& o, std::ostream& out)
{
  const std::string hash = io::manifest_hash(o.manifest);
  o.result["manifest_hash"] = hash;
  if (prefix.empty()) {
    json all = o.result;
    all["manifest"] = o.manifest;
    out << all.dump(2) << '\n';
    return;
  }
  std::ostringstream csv;
  if (!o.csv_text.empty()) {
    csv << "# manifest_hash=" << hash << '\n' << o.csv_text;
  } else {
    io::write_csv(csv, o.csv_columns, o.csv_rows, hash);
  }
  json manifest_file{{"manifest", o.manifest}, {"manifest_hash", hash}};
  io::write_text(prefix + ".json", o.result.dump(2) + "\n");
  io::write_text(prefix + ".csv", csv.str());
  io::write_text(prefix + ".manifest.json", manifest_file.dump(2) + "\n");
  out << json{{"manifest_hash", hash},
              {"outputs", {prefix + ".json", prefix + ".csv", prefix + ".manifest.json"}}}
           .dump()
      << '\n';
}

// ---------------------------------------------------------------------------
// commands

int cmd_estimate(const Invocation& inv, std::ostream& out)
{
  const RunConfig c = RunConfig::from_json(merged_config(inv));
  const int threads = resolve_threads(inv.threads);
  const Prepared p = prepare(c, threads);
  const BandwidthOutcome bw = resolve_bandwidth(c, p, threads);
  const std::vector<double> grid = resolve_grid(c, p.data, 21);
  check_alpha(c.alpha);

  CurveOptions co;
  co.debias = debiased(c);
  co.fast_eif = c.fast_eif;
  co.threads = threads;
  const CurveResult curve = estimate_curve(p.data, p.xi, grid, bw.pair.h, bw.pair.b, p.kernel, co);
  require_points(curve);

  Outputs o;
  o.manifest = base_manifest("estimate", c.to_json());
  o.manifest["n"] = p.data.size();
  o.manifest["bandwidth"] = bandwidth_json(bw.pair);
  o.manifest["grid"] = grid;
  o.result["bandwidth"] = bandwidth_json(bw.pair);
  o.result["alpha"] = c.alpha;
  o.result["points"] = json::array();
  o.csv_columns = {"a0", "theta", "sigma", "se", "lower_pt", "upper_pt", "theta_ll", "theta2"};
  for (const auto& pt : curve.points) {
    const Interval ci = pointwise_ci(pt, p.data.size(), c.alpha);
    o.result["points"].push_back(json{{"a0", pt.a0},
                                      {"theta", pt.theta_hat},
                                      {"sigma", pt.sigma_hat},
                                      {"se", ci.se},
                                      {"lower_pt", ci.lower},
                                      {"upper_pt", ci.upper},
                                      {"theta_ll", pt.theta_ll},
                                      {"theta2", pt.theta2_hat}});
    o.csv_rows.push_back(
      {pt.a0, pt.theta_hat, pt.sigma_hat, ci.se, ci.lower, ci.upper, pt.theta_ll, pt.theta2_hat});
  }
  emit(c.out, o, out);
  return 0;
}

int cmd_band(const Invocation& inv, std::ostream& out)
{
  const RunConfig c = RunConfig::from_json(merged_config(inv));
  if (!c.seed) {
    throw Error(ErrorKind::InvalidConfig, "band requires --seed");
  }
  check_alpha(c.alpha);
  const int threads = resolve_threads(inv.threads);
  const Prepared p = prepare(c, threads);
  const BandwidthOutcome bw = resolve_bandwidth(c, p, threads);
  const std::vector<double> grid = resolve_grid(c, p.data, 101);

  CurveOptions co;
  co.debias = debiased(c);
  co.fast_eif = c.fast_eif;
  co.threads = threads;
  const CurveResult curve = estimate_curve(p.data, p.xi, grid, bw.pair.h, bw.pair.b, p.kernel, co);
  require_points(curve);
  const CovarianceForm form = c.covariance == "diagonal" ? CovarianceForm::Diagonal
                                                         : CovarianceForm::InfluenceFunction;
  const BandResult band =
    uniform_band(curve.points, p.data.size(), c.alpha, c.draws, *c.seed, threads, form);

  Outputs o;
  o.manifest = base_manifest("band", c.to_json());
  o.manifest["n"] = p.data.size();
  o.manifest["bandwidth"] = bandwidth_json(bw.pair);
  o.manifest["grid"] = grid;
  o.result["bandwidth"] = bandwidth_json(bw.pair);
  o.result["alpha"] = c.alpha;
  o.result["t_quantile"] = band.t_quantile;
  o.result["draws"] = band.draws;
  o.result["seed"] = band.seed;
  o.result["warnings"] = band.warnings;
  o.result["points"] = json::array();
  o.csv_columns = {"a0", "theta", "se", "lower_pt", "upper_pt", "lower_band", "upper_band"};
  for (std::size_t k = 0; k < band.grid.size(); ++k) {
    o.result["points"].push_back(json{{"a0", band.grid[k]},
                                      {"theta", band.theta_hat[k]},
                                      {"se", band.se[k]},
                                      {"lower_pt", band.lower_pointwise[k]},
                                      {"upper_pt", band.upper_pointwise[k]},
                                      {"lower_band", band.lower[k]},
                                      {"upper_band", band.upper[k]}});
    o.csv_rows.push_back({band.grid[k], band.theta_hat[k], band.se[k], band.lower_pointwise[k],
                          band.upper_pointwise[k], band.lower[k], band.upper[k]});
  }
  emit(c.out, o, out);
  return 0;
}

int cmd_bandwidth(const Invocation& inv, const std::string& method, std::ostream& out)
{
  json merged = merged_config(inv);
  if (!method.empty()) {
    merged["bandwidth"] = method;
  }
  const RunConfig c = RunConfig::from_json(merged);
  if (c.bandwidth == "manual") {
    throw Error(ErrorKind::InvalidConfig, "bandwidth command needs a data-driven method");
  }
  const int threads = resolve_threads(inv.threads);
  const Prepared p = prepare(c, threads);
  const BandwidthOutcome bw = resolve_bandwidth(c, p, threads);

  Outputs o;
  o.manifest = base_manifest("bandwidth", c.to_json());
  o.manifest["n"] = p.data.size();
  o.result["bandwidth"] = bandwidth_json(bw.pair);
  o.result["details"] = bw.details;
  o.manifest["bandwidth"] = o.result["bandwidth"];
  o.csv_columns = bw.columns;
  o.csv_rows = bw.rows;
  emit(c.out, o, out);
  return 0;
}

// simulation configuration

BandwidthRule parse_bandwidth_rule(const json& j)
{
  io::check_keys(j, {"method", "tau", "h", "b", "loocv_grid_size", "omega_size"},
                 "estimator bandwidth");
  BandwidthRule r;
  const std::string method = j.contains("method") ? read_value<std::string>(j, "method", "bandwidth")
                                                  : std::string("plugin");
  if (method == "plugin") {
    r.method = BandwidthMethod::PlugIn;
  } else if (method == "loocv") {
    r.method = BandwidthMethod::LOOCVJoint;
  } else if (method == "loocv-fixed-tau") {
    r.method = BandwidthMethod::LOOCVFixedTau;
  } else if (method == "manual") {
    r.method = BandwidthMethod::Manual;
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown bandwidth method '" + method + "'");
  }
  read_into(j, "tau", r.tau, "bandwidth");
  read_into(j, "h", r.h, "bandwidth");
  read_into(j, "b", r.b, "bandwidth");
  read_into(j, "loocv_grid_size", r.loocv_grid_size, "bandwidth");
  read_into(j, "omega_size", r.omega_grid_size, "bandwidth");
  return r;
}

SimConfig parse_sim_config(const json& j)
{
  io::check_keys(j,
                 {"n", "reps", "seed", "setting", "kernel", "estimators", "eval_grid", "alpha",
                  "inference", "contrast_points", "contrast_reference", "band", "truncate_g",
                  "fast_eif", "dgp"},
                 "simulation config");
  const std::string ctx = "simulation config";
  SimConfig s;
  read_into(j, "n", s.n, ctx);
  read_into(j, "reps", s.reps, ctx);
  read_into(j, "seed", s.seed, ctx);
  if (j.contains("setting")) {
    s.setting = parse_nuisance_setting(read_value<std::string>(j, "setting", ctx));
  }
  if (j.contains("kernel")) {
    s.kernel = parse_kernel(read_value<std::string>(j, "kernel", ctx));
  }
  if (j.contains("estimators")) {
    s.estimators.clear();
    for (const auto& e : j.at("estimators")) {
      io::check_keys(e, {"label", "estimator", "bandwidth"}, "estimator");
      EstimatorConfig ec;
      const std::string kind =
        e.contains("estimator") ? read_value<std::string>(e, "estimator", "estimator")
                                : std::string("debiased");
      if (kind != "debiased" && kind != "local-linear") {
        throw Error(ErrorKind::InvalidConfig, "unknown estimator '" + kind + "'");
      }
      ec.debias = kind == "debiased";
      ec.label = e.contains("label") ? read_value<std::string>(e, "label", "estimator") : kind;
      if (e.contains("bandwidth")) {
        ec.bandwidth = parse_bandwidth_rule(e.at("bandwidth"));
      }
      s.estimators.push_back(ec);
    }
  }
  read_into(j, "eval_grid", s.eval_grid, ctx);
  read_into(j, "alpha", s.alpha, ctx);
  read_into(j, "inference", s.inference, ctx);
  read_into(j, "contrast_points", s.contrast_points, ctx);
  read_into(j, "contrast_reference", s.contrast_reference, ctx);
  if (j.contains("band")) {
    const json& b = j.at("band");
    if (b.is_boolean()) {
      s.band = b.get<bool>();
    } else {
      io::check_keys(b, {"enabled", "lower", "upper", "size", "draws"}, "band");
      s.band = true;
      read_into(b, "enabled", s.band, "band");
      read_into(b, "lower", s.band_lower, "band");
      read_into(b, "upper", s.band_upper, "band");
      read_into(b, "size", s.band_size, "band");
      read_into(b, "draws", s.band_draws, "band");
    }
  }
  read_into(j, "truncate_g", s.truncate_g, ctx);
  read_into(j, "fast_eif", s.fast_eif, ctx);
  if (j.contains("dgp")) {
    const json& d = j.at("dgp");
    io::check_keys(d, {"beta", "gamma1", "gamma2", "gamma3", "gamma4"}, "dgp");
    read_into(d, "beta", s.spec.beta, "dgp");
    read_into(d, "gamma1", s.spec.gamma1, "dgp");
    read_into(d, "gamma2", s.spec.gamma2, "dgp");
    read_into(d, "gamma3", s.spec.gamma3, "dgp");
    read_into(d, "gamma4", s.spec.gamma4, "dgp");
  }
  return s;
}

json sim_config_json(const SimConfig& s)
{
  json est = json::array();
  for (const auto& e : s.estimators) {
    est.push_back(json{{"label", e.label},
                       {"estimator", e.debias ? "debiased" : "local-linear"},
                       {"bandwidth",
                        {{"method", to_string(e.bandwidth.method)},
                         {"tau", e.bandwidth.tau},
                         {"h", e.bandwidth.h},
                         {"b", e.bandwidth.b},
                         {"loocv_grid_size", e.bandwidth.loocv_grid_size},
                         {"omega_size", e.bandwidth.omega_grid_size}}}});
  }
  return json{{"n", s.n},
              {"reps", s.reps},
              {"seed", s.seed},
              {"setting", to_string(s.setting)},
              {"kernel", s.kernel.name()},
              {"estimators", est},
              {"eval_grid", s.eval_grid.empty() ? SimConfig::default_grid() : s.eval_grid},
              {"alpha", s.alpha},
              {"inference", s.inference},
              {"contrast_points", s.contrast_points},
              {"contrast_reference", s.contrast_reference},
              {"band",
               {{"enabled", s.band},
                {"lower", s.band_lower},
                {"upper", s.band_upper},
                {"size", s.band_size},
                {"draws", s.band_draws}}},
              {"truncate_g", optional_json(s.truncate_g)},
              {"fast_eif", s.fast_eif},
              {"dgp",
               {{"beta", s.spec.beta},
                {"gamma1", s.spec.gamma1},
                {"gamma2", s.spec.gamma2},
                {"gamma3", s.spec.gamma3},
                {"gamma4", s.spec.gamma4}}}};
}

json report_json(const SimReport& r)
{
  json est = json::array();
  for (const auto& e : r.estimators) {
    est.push_back(json{{"label", e.label},
                       {"grid", e.grid},
                       {"truth", e.truth},
                       {"mean_estimate", e.mean_estimate},
                       {"bias", e.bias},
                       {"variance", e.variance},
                       {"mse", e.mse},
                       {"coverage", e.coverage},
                       {"contrast_points", e.contrast_points},
                       {"contrast_truth", e.contrast_truth},
                       {"contrast_bias", e.contrast_bias},
                       {"contrast_coverage", e.contrast_coverage},
                       {"contrast_coverage_diagonal", e.contrast_coverage_diagonal},
                       {"band_coverage", e.band_coverage},
                       {"mean_h", e.mean_h},
                       {"mean_b", e.mean_b}});
  }
  return json{{"n", r.n},
              {"reps", r.reps},
              {"completed", r.completed},
              {"failures", r.failures},
              {"failure_reasons", r.failure_reasons},
              {"seed", r.seed},
              {"setting", r.setting},
              {"kernel", r.kernel},
              {"alpha", r.alpha},
              {"estimators", est}};
}

std::string tidy_csv(const SimReport& r)
{
  std::ostringstream os;
  os << "estimator,metric,a,value\n";
  auto row = [&](const std::string& label, const char* metric, const std::string& a, double v) {
    os << label << ',' << metric << ',' << a << ',' << io::format_double(v) << '\n';
  };
  for (const auto& e : r.estimators) {
    auto series = [&](const char* metric, const std::vector<double>& at,
                      const std::vector<double>& values) {
      for (std::size_t k = 0; k < values.size(); ++k) {
        row(e.label, metric, io::format_double(at[k]), values[k]);
      }
    };
    series("truth", e.grid, e.truth);
    series("mean_estimate", e.grid, e.mean_estimate);
    series("bias", e.grid, e.bias);
    series("variance", e.grid, e.variance);
    series("mse", e.grid, e.mse);
    series("coverage", e.grid, e.coverage);
    series("contrast_truth", e.contrast_points, e.contrast_truth);
    series("contrast_bias", e.contrast_points, e.contrast_bias);
    series("contrast_coverage", e.contrast_points, e.contrast_coverage);
    series("contrast_coverage_diagonal", e.contrast_points, e.contrast_coverage_diagonal);
    row(e.label, "band_coverage", "", e.band_coverage);
    row(e.label, "mean_h", "", e.mean_h);
    row(e.label, "mean_b", "", e.mean_b);
  }
  return os.str();
}

int cmd_simulate(const std::string& config_path,
                 const std::optional<std::uint64_t>& seed,
                 const std::string& prefix,
                 int threads_requested,
                 std::ostream& out)
{
  if (config_path.empty()) {
    throw Error(ErrorKind::InvalidConfig, "simulate requires --config");
  }
  json j = io::read_json(config_path);
  if (!j.is_object()) {
    throw Error(ErrorKind::InvalidConfig, "simulation config must be a JSON object");
  }
  if (seed) {
    j["seed"] = *seed;
  }
  if (!j.contains("seed")) {
    throw Error(ErrorKind::InvalidConfig, "simulate requires --seed");
  }
  SimConfig s = parse_sim_config(j);
  s.threads = resolve_threads(threads_requested);
  const SimReport report = run_replications(s);

  Outputs o;
  o.manifest = base_manifest("simulate", sim_config_json(s));
  o.result = report_json(report);
  o.csv_text = tidy_csv(report);
  emit(prefix, o, out);
  return 0;
}

int cmd_constants(const std::string& kernel_name, double tau, std::ostream& out)
{
  const KernelSpec k = parse_kernel(kernel_name);
  const KernelConstants kc = kernel_constants(k);
  json s2 = json::array();
  for (int r = 0; r < 2; ++r) {
    s2.push_back({kc.s2(r, 0), kc.s2(r, 1)});
  }
  json s4 = json::array();
  for (int r = 0; r < 4; ++r) {
    s4.push_back({kc.s4(r, 0), kc.s4(r, 1), kc.s4(r, 2), kc.s4(r, 3)});
  }
  const json result{{"kernel", k.name()},
                    {"c", kc.c},
                    {"cstar", kc.cstar},
                    {"S2", s2},
                    {"S4", s4},
                    {"tau", tau},
                    {"V_K_tau", v_k_tau(k, tau)},
                    {"V_K_tau_expanded", v_k_tau_expanded(k, tau)}};
  out << result.dump(2) << '\n';
  return 0;
}

int exit_code(ErrorKind kind)
{
  switch (classify(kind)) {
    case ErrorClass::Config: return 2;
    case ErrorClass::Data: return 3;
    case ErrorClass::Numerical: return 4;
  }
  return 4;
}

std::string one_line(std::string s)
{
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') {
      ch = ' ';
    }
  }
  return s;
}

} // namespace

// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json(const json& j)
{
  io::check_keys(j, kRunKeys, "run configuration");
  const std::string ctx = "run configuration";
  RunConfig c;
  read_into(j, "input", c.input, ctx);
  read_into(j, "y", c.y, ctx);
  read_into(j, "a", c.a, ctx);
  read_into(j, "w", c.w, ctx);
  read_into(j, "kernel", c.kernel, ctx);
  read_into(j, "estimator", c.estimator, ctx);
  read_into(j, "bandwidth", c.bandwidth, ctx);
  read_into(j, "h", c.h, ctx);
  read_into(j, "b", c.b, ctx);
  read_into(j, "tau", c.tau, ctx);
  read_into(j, "h_grid", c.h_grid, ctx);
  read_into(j, "b_grid", c.b_grid, ctx);
  read_into(j, "pilot_h1", c.pilot_h1, ctx);
  read_into(j, "knn_k", c.knn_k, ctx);
  read_into(j, "omega_size", c.omega_size, ctx);
  read_into(j, "nuisance", c.nuisance, ctx);
  read_into(j, "mu_file", c.mu_file, ctx);
  read_into(j, "g_file", c.g_file, ctx);
  read_into(j, "grid", c.grid, ctx);
  read_into(j, "grid_lower", c.grid_lower, ctx);
  read_into(j, "grid_upper", c.grid_upper, ctx);
  read_into(j, "grid_size", c.grid_size, ctx);
  read_into(j, "alpha", c.alpha, ctx);
  read_into(j, "draws", c.draws, ctx);
  read_into(j, "seed", c.seed, ctx);
  read_into(j, "truncate_g", c.truncate_g, ctx);
  read_into(j, "fast_eif", c.fast_eif, ctx);
  read_into(j, "covariance", c.covariance, ctx);
  read_into(j, "out", c.out, ctx);

  parse_kernel(c.kernel);
  debiased(c);
  if (c.covariance != "influence-function" && c.covariance != "diagonal") {
    throw Error(ErrorKind::InvalidConfig, "covariance must be influence-function or diagonal");
  }
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) {
    throw Error(ErrorKind::InvalidConfig, "tau must be positive");
  }
  if (c.omega_size < 1) {
    throw Error(ErrorKind::InvalidConfig, "omega_size must be positive");
  }
  check_alpha(c.alpha);
  return c;
}

json RunConfig::to_json() const
{
  return json{{"input", input},
              {"y", y},
              {"a", a},
              {"w", w},
              {"kernel", kernel},
              {"estimator", estimator},
              {"bandwidth", bandwidth},
              {"h", optional_json(h)},
              {"b", optional_json(b)},
              {"tau", tau},
              {"h_grid", h_grid},
              {"b_grid", b_grid},
              {"pilot_h1", optional_json(pilot_h1)},
              {"knn_k", optional_json(knn_k)},
              {"omega_size", omega_size},
              {"nuisance", nuisance},
              {"mu_file", mu_file},
              {"g_file", g_file},
              {"grid", grid},
              {"grid_lower", optional_json(grid_lower)},
              {"grid_upper", optional_json(grid_upper)},
              {"grid_size", optional_json(grid_size)},
              {"alpha", alpha},
              {"draws", draws},
              {"seed", optional_json(seed)},
              {"truncate_g", optional_json(truncate_g)},
              {"fast_eif", fast_eif},
              {"covariance", covariance},
              {"out", out}};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Debiased local-linear dose-response curve estimation", "drcurve"};
  // --h is the bandwidth, so help is long-form only
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Invocation est_inv;
  CLI::App* estimate = app.add_subcommand("estimate", "Estimate the curve with pointwise intervals");
  add_run_flags(estimate, est_inv, false);

  Invocation band_inv;
  CLI::App* band = app.add_subcommand("band", "Uniform confidence band");
  add_run_flags(band, band_inv, true);

  Invocation bw_inv;
  std::string bw_method;
  CLI::App* bandwidth = app.add_subcommand("bandwidth", "Data-driven bandwidth selection");
  add_run_flags(bandwidth, bw_inv, false);
  bandwidth->add_option("--method", bw_method, "loocv, loocv-fixed-tau or plugin");

  std::string sim_config;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  int sim_threads = 0;
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo replication study");
  simulate->add_option("--config", sim_config, "JSON simulation config")->required();
  CLI::Option* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Random seed");
  simulate->add_option("--out,-o", sim_out, "Output prefix");
  simulate->add_option("--threads", sim_threads, "Worker threads");

  std::string kernel_name = "epanechnikov";
  double tau = 1.0;
  CLI::App* constants = app.add_subcommand("constants", "Kernel constants as JSON");
  constants->add_option("--kernel", kernel_name, "Kernel name");
  constants->add_option("--tau", tau, "Bandwidth ratio");

  try {
    std::vector<std::string> args;
    for (int k = argc - 1; k >= 1; --k) {
      args.emplace_back(argv[k]);
    }
    app.parse(args);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "drcurve: error kind=InvalidConfig exit=2: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*estimate) {
      return cmd_estimate(est_inv, out);
    }
    if (*band) {
      return cmd_band(band_inv, out);
    }
    if (*bandwidth) {
      return cmd_bandwidth(bw_inv, bw_method, out);
    }
    if (*simulate) {
      std::optional<std::uint64_t> seed;
      if (sim_seed_opt->count() > 0) {
        seed = sim_seed;
      }
      return cmd_simulate(sim_config, seed, sim_out, sim_threads, out);
    }
    if (*constants) {
      return cmd_constants(kernel_name, tau, out);
    }
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    err << "drcurve: error kind=" << to_string(e.kind()) << " exit=" << code << ": "
        << one_line(e.what()) << '\n';
    return code;
  } catch (const std::exception& e) {
    err << "drcurve: error kind=Internal exit=1: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 2;
}

} // namespace drcurve::cli
