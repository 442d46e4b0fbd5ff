// Acceptance harness. Prints one PASS or FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include "drcurve/bandwidth.hpp"
#include "drcurve/cli.hpp"
#include "drcurve/error.hpp"
#include "drcurve/estimator.hpp"
#include "drcurve/inference.hpp"
#include "drcurve/kernels.hpp"
#include "drcurve/simulation.hpp"

#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace {

using namespace drcurve;
using testing::basis;
using testing::scaled_kernel;

const KernelSpec kEpan{};

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6)
{
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

double rel(double got, double want)
{
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

Outcome kernel_constants_criterion()
{
  const double v1 = v_k_tau(kEpan, 1.0);
  const double v0 = v_k_tau(kEpan, 0.0);
  const bool ok = std::abs(v1 - 1.25) <= 1e-6 && std::abs(v0 - 0.6) <= 1e-6;
  return {ok, "V_K(1)=" + fmt(v1, 10) + " V_K(0)=" + fmt(v0, 10)};
}

Outcome identities_criterion()
{
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<Index> size(20, 200);
  std::uniform_real_distribution<double> where(0.35, 0.65);
  std::uniform_real_distribution<double> bw(0.25, 0.45);
  double worst_sum = 0.0;
  double worst_moment = 0.0;
  double worst_mean = 0.0;
  double worst_one_step = 0.0;
  double worst_decomp = 0.0;
  int done = 0;
  for (std::uint64_t seed = 0; done < 100; ++seed) {
    const testing::Instance inst = testing::random_instance(7000 + seed, size(gen));
    const double a0 = where(gen);
    const double h = bw(gen);
    const double b = bw(gen);
    PointInference p;
    try {
      p = estimate_point(inst.data, inst.xi, a0, h, b, kEpan);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SingularWindow) {
        continue;
      }
      throw;
    }
    attach_eif(inst.data, inst.xi, p);
    const VectorXd& g = p.gamma.values_at_data();
    const double n = static_cast<double>(g.size());
    const double gscale = g.cwiseAbs().maxCoeff();
    worst_sum = std::max(worst_sum, std::abs(g.sum() / n - 1.0));
    const double moment = g.dot((inst.data.a.array() - a0).matrix()) / n;
    worst_moment = std::max(worst_moment, std::abs(moment) / std::max(1.0, gscale * h));
    worst_mean =
      std::max(worst_mean, std::abs(p.phi_star.mean()) / p.phi_star.cwiseAbs().maxCoeff());
    const OneStepTerms t = one_step_identity(inst.data, inst.xi, p);
    worst_one_step = std::max(worst_one_step, std::abs(t.residual) / std::max(1.0, std::abs(t.theta_hat)));
    const double c2 = kernel_constants(kEpan).c[2];
    const double decomposed = p.theta_ll - 0.5 * c2 * h * h * p.theta2_hat;
    worst_decomp = std::max(worst_decomp, rel(p.theta_hat, decomposed));
    ++done;
  }
  const bool ok = worst_sum <= 1e-9 && worst_moment <= 1e-9 && worst_mean <= 1e-10 &&
                  worst_one_step <= 1e-9 && worst_decomp <= 1e-12;
  return {ok, "max |PnG-1|=" + fmt(worst_sum, 3) + " moment=" + fmt(worst_moment, 3) +
                " mean(phi)=" + fmt(worst_mean, 3) + " one-step=" + fmt(worst_one_step, 3) +
                " decomposition=" + fmt(worst_decomp, 3)};
}

Outcome polynomial_criterion()
{
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> coef(0.0, 2.0);
  double worst_affine = 0.0;
  double worst_affine_d2 = 0.0;
  double worst_cubic = 0.0;
  for (int r = 0; r < 50; ++r) {
    const Index n = 80 + 10 * r;
    Dataset d;
    d.a.resize(n);
    for (Index i = 0; i < n; ++i) {
      d.a[i] = unif(gen);
    }
    d.y = VectorXd::Zero(n);
    d.w = MatrixXd::Zero(n, 1);
    PseudoOutcomes xi = testing::direct_outcomes(d);
    const double a0 = 0.3 + 0.4 * unif(gen);
    const double h = 0.2 + 0.2 * unif(gen);
    const double b = 0.25 + 0.2 * unif(gen);

    const double c0 = coef(gen);
    const double c1 = coef(gen);
    xi.xi = (c0 + c1 * d.a.array()).matrix();
    const PointInference lin = estimate_point(d, xi, a0, h, b, kEpan);
    const double scale = std::abs(c0) + std::abs(c1);
    worst_affine = std::max(worst_affine, std::abs(lin.theta_hat - (c0 + c1 * a0)) /
                                            std::max(1e-300, std::abs(c0 + c1 * a0)));
    worst_affine_d2 = std::max(worst_affine_d2, std::abs(lin.theta2_hat) / scale);

    const double c2 = coef(gen);
    const double c3 = coef(gen);
    xi.xi = (c0 + c1 * d.a.array() + c2 * d.a.array().square() + c3 * d.a.array().cube()).matrix();
    const PointInference cub = estimate_point(d, xi, a0, h, b, kEpan);
    const double want = 2.0 * c2 + 6.0 * c3 * a0;
    worst_cubic = std::max(worst_cubic, std::abs(cub.theta2_hat - want) / std::abs(want));
  }
  const bool ok = worst_affine <= 1e-10 && worst_affine_d2 <= 1e-8 && worst_cubic <= 1e-8;
  return {ok, "affine rel=" + fmt(worst_affine, 3) + " affine theta2=" + fmt(worst_affine_d2, 3) +
                " cubic theta2 rel=" + fmt(worst_cubic, 3)};
}

double refit_without(const VectorXd& a, const VectorXd& y, double x, double h, Index skip)
{
  Eigen::Matrix2d xtx = Eigen::Matrix2d::Zero();
  Eigen::Vector2d xty = Eigen::Vector2d::Zero();
  for (Index j = 0; j < a.size(); ++j) {
    if (j == skip) {
      continue;
    }
    const Eigen::Vector2d w = basis(a[j], x, h, 1);
    const double k = scaled_kernel(a[j], x, h);
    xtx += k * w * w.transpose();
    xty += k * w * y[j];
  }
  return xtx.fullPivLu().solve(xty)[0];
}

Outcome loocv_criterion()
{
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Index n = 40 + static_cast<Index>(seed % 21);
    const testing::Instance inst = testing::random_instance(500 + seed, n);
    const double h = 0.4;
    const double shortcut = loocv_imse(inst.data, inst.xi, h, h, kEpan, false);
    double brute = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double r =
        inst.xi.xi[i] - refit_without(inst.data.a, inst.xi.xi, inst.data.a[i], h, i);
      brute += r * r;
    }
    brute /= static_cast<double>(n);
    worst = std::max(worst, std::abs(shortcut - brute) / brute);
  }
  return {worst <= 1e-8, "max rel diff=" + fmt(worst, 3) + " over 50 seeds"};
}

Outcome eif_criterion()
{
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index n = 50 + static_cast<Index>(seed) * 2;
    const testing::Instance inst = testing::random_instance(900 + seed, n);
    const double h = 0.25;
    const double b = 0.3;
    const PointInference p = estimate_point(inst.data, inst.xi, 0.5, h, b, kEpan);
    const VectorXd phi = eif_values(inst.data, inst.xi, p);
    const testing::GammaOracle oracle(inst.data.a, 0.5, h, b);
    const VectorXd ref = testing::eif_oracle(inst.data, inst.xi.xi, inst.xi.xi, inst.mu, oracle);
    worst = std::max(worst, (phi - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, "max rel diff=" + fmt(worst, 3) + " over 20 seeds"};
}

Outcome band_quantile_criterion()
{
  const double one = sup_gaussian_quantile(MatrixXd::Ones(1, 1), 0.05, 200000, 1);
  const double want = normal_quantile((1.0 + std::sqrt(0.95)) / 2.0);
  const double two = sup_gaussian_quantile(MatrixXd::Identity(2, 2), 0.05, 200000, 2);
  MatrixXd corr(4, 4);
  corr << 1.0, 0.6, 0.3, 0.1, 0.6, 1.0, 0.6, 0.3, 0.3, 0.6, 1.0, 0.6, 0.1, 0.3, 0.6, 1.0;
  const auto draws = sup_gaussian_draws(corr, 20000, 3);
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
    const double q = sup_quantile_from_draws(draws, alpha);
    monotone = monotone && q <= prev;
    prev = q;
  }
  const bool ok = std::abs(one - 1.959964) <= 0.02 && std::abs(two - want) <= 0.02 && monotone;
  return {ok, "t(1 point)=" + fmt(one) + " t(2 independent)=" + fmt(two) + " vs " + fmt(want) +
                (monotone ? " monotone" : " not monotone")};
}

Outcome dgp_criterion()
{
  const DGPSpec spec;
  const Dataset d = draw_dataset(200000, 77, spec);
  std::vector<double> a(d.a.data(), d.a.data() + d.size());
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ks = std::max({ks, (i + 1) / n - a[i], a[i] - i / n});
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Index i = 0; i < d.size(); ++i) {
    const Eigen::RowVector4d w = d.w.row(i);
    const double p = spec.conditional_density(d.a[i], w.data());
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const bool ok = ks < 0.005 && lo > 0.1 && hi < 1.9;
  return {ok, "KS=" + fmt(ks, 4) + " density range [" + fmt(lo, 4) + ", " + fmt(hi, 4) + "]"};
}

EstimatorConfig plugin_estimator(const std::string& label, bool debias)
{
  EstimatorConfig e;
  e.label = label;
  e.debias = debias;
  e.bandwidth.method = BandwidthMethod::PlugIn;
  e.bandwidth.tau = 1.0;
  return e;
}

struct CoverageStudy
{
  SimReport report;
  double curvature_point = 0.0;
};

const CoverageStudy& coverage_study()
{
  static const CoverageStudy study = [] {
    CoverageStudy s;
    double best = -1.0;
    for (double a : SimConfig::default_grid()) {
      const double d2 = std::abs(true_theta_second_derivative(a));
      if (d2 > best) {
        best = d2;
        s.curvature_point = a;
      }
    }
    SimConfig c;
    c.n = 1000;
    c.reps = 300;
    c.seed = 20240601;
    c.setting = NuisanceSetting::BothCorrect;
    c.estimators = {plugin_estimator("debiased", true), plugin_estimator("local-linear", false)};
    c.eval_grid = {0.3, 0.5, 0.7, s.curvature_point};
    c.contrast_points = {0.51, 0.7};
    c.contrast_reference = 0.5;
    c.threads = 0;
    s.report = run_replications(c);
    return s;
  }();
  return study;
}

Outcome coverage_criterion()
{
  const CoverageStudy& s = coverage_study();
  const EstimatorReport& dr = s.report.estimators[0];
  const EstimatorReport& ll = s.report.estimators[1];
  bool ok = true;
  std::string detail = "debiased coverage";
  for (std::size_t k = 0; k < 3; ++k) {
    ok = ok && dr.coverage[k] >= 0.90 && dr.coverage[k] <= 0.99;
    detail += " " + fmt(dr.grid[k], 3) + ":" + fmt(dr.coverage[k], 4);
  }
  const double gap = dr.coverage[3] - ll.coverage[3];
  ok = ok && gap >= 0.03;
  detail += "; at a=" + fmt(s.curvature_point, 3) + " debiased " + fmt(dr.coverage[3], 4) +
            " local-linear " + fmt(ll.coverage[3], 4) + " (completed " +
            std::to_string(s.report.completed) + "/" + std::to_string(s.report.reps) + ")";
  return {ok, detail};
}

Outcome contrast_criterion()
{
  const EstimatorReport& dr = coverage_study().report.estimators[0];
  const double at_07 = dr.contrast_coverage[1];
  const double diag_051 = dr.contrast_coverage_diagonal[0];
  const double eif_051 = dr.contrast_coverage[0];
  const bool ok = at_07 >= 0.90 && at_07 <= 0.99 && diag_051 >= eif_051;
  return {ok, "theta(0.7)-theta(0.5) coverage " + fmt(at_07, 4) + "; at 0.51 diagonal " +
                fmt(diag_051, 4) + " vs influence-function " + fmt(eif_051, 4)};
}

Outcome double_robustness_criterion()
{
  bool ok = true;
  std::string detail;
  for (NuisanceSetting setting :
       {NuisanceSetting::PropensityMisspecified, NuisanceSetting::OutcomeMisspecified}) {
    std::vector<double> bias;
    std::vector<double> mc_se;
    for (Index n : {Index{500}, Index{4000}}) {
      SimConfig c;
      c.n = n;
      c.reps = 200;
      c.seed = 777;
      c.setting = setting;
      c.estimators = {plugin_estimator("debiased", true)};
      c.eval_grid = {0.5};
      c.inference = false;
      c.threads = 0;
      const SimReport r = run_replications(c);
      bias.push_back(std::abs(r.estimators[0].bias[0]));
      mc_se.push_back(std::sqrt(r.estimators[0].variance[0] / r.completed));
    }
    ok = ok && bias[1] < bias[0];
    detail += std::string(to_string(setting)) + " |bias| n=500 " + fmt(bias[0], 4) + " (MC se " +
              fmt(mc_se[0], 2) + ") n=4000 " + fmt(bias[1], 4) + " (MC se " + fmt(mc_se[1], 2) +
              "); ";
  }
  return {ok, detail};
}

std::string slurp(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args, std::string& out)
{
  args.insert(args.begin(), "drcurve");
  std::vector<const char*> argv;
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  std::ostringstream o;
  std::ostringstream e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  out = o.str() + e.str();
  return code;
}

Outcome determinism_criterion()
{
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "drcurve_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Dataset d = draw_dataset(400, 5);
  {
    std::vector<std::vector<double>> rows;
    for (Index i = 0; i < d.size(); ++i) {
      rows.push_back({d.y[i], d.a[i], d.w(i, 0), d.w(i, 1), d.w(i, 2), d.w(i, 3)});
    }
    std::ofstream f(dir / "data.csv");
    io::write_csv(f, {"y", "a", "w1", "w2", "w3", "w4"}, rows);
  }
  io::write_text((dir / "sim.json").string(), R"({
    "n": 300, "reps": 4, "seed": 9, "setting": "correct",
    "estimators": [{"label": "dr", "estimator": "debiased", "bandwidth": {"method": "plugin"}}],
    "eval_grid": [0.3, 0.5, 0.7], "contrast_points": [0.7],
    "band": {"enabled": true, "size": 21, "draws": 2000}
  })");
  const std::string data = (dir / "data.csv").string();
  const std::vector<std::vector<std::string>> commands{
    {"estimate", "--input", data, "--grid-size", "15"},
    {"band", "--input", data, "--seed", "11", "--draws", "5000", "--grid-size", "31"},
    {"bandwidth", "--input", data, "--method", "loocv"},
    {"bandwidth", "--input", data, "--method", "plugin"},
    {"simulate", "--config", (dir / "sim.json").string()},
    {"constants", "--kernel", "triangular", "--tau", "0.5"},
  };
  std::vector<std::string> mismatched;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<std::string> stdout_text;
    std::vector<std::string> files;
    const bool writes = commands[c][0] != "constants";
    for (const char* threads : {"1", "1", "4"}) {
      auto args = commands[c];
      std::string prefix;
      if (writes) {
        prefix = (dir / ("run" + std::to_string(stdout_text.size()))).string();
        args.insert(args.end(), {"--threads", threads, "--out", prefix});
      }
      std::string out;
      if (run_cli(args, out) != 0) {
        return {false, "command '" + commands[c][0] + "' failed: " + out};
      }
      stdout_text.push_back(out);
      if (writes) {
        files.push_back(slurp(prefix + ".json") + slurp(prefix + ".csv") +
                        slurp(prefix + ".manifest.json"));
      }
    }
    auto same = [](const std::vector<std::string>& v) {
      return std::all_of(v.begin(), v.end(), [&](const std::string& s) { return s == v[0]; });
    };
    // stdout names the output prefix, so only the files are compared for
    // commands that write them
    if (writes ? !same(files) : !same(stdout_text)) {
      mismatched.push_back(commands[c][0]);
    }
  }
  fs::remove_all(dir);
  std::string detail = std::to_string(commands.size()) + " commands, threads 1/1/4";
  for (const auto& m : mismatched) {
    detail += "; differs: " + m;
  }
  return {mismatched.empty(), detail};
}

} // namespace

int main(int argc, char** argv)
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    {"kernel constants", kernel_constants_criterion},
    {"algebraic identities", identities_criterion},
    {"polynomial reproduction", polynomial_criterion},
    {"LOOCV shortcut vs refit", loocv_criterion},
    {"influence function vs literal", eif_criterion},
    {"band quantile sanity", band_quantile_criterion},
    {"DGP fidelity", dgp_criterion},
    {"pointwise coverage study", coverage_criterion},
    {"double robustness", double_robustness_criterion},
    {"contrast coverage", contrast_criterion},
    {"determinism", determinism_criterion},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    selected.insert(std::atoi(argv[i]));
  }
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first
              << "): " << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
