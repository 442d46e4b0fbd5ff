#pragma once

#include "drcurve/io.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace drcurve::cli {

inline constexpr const char* kVersion = "drcurve 0.1.0";

//! Resolved settings for estimate, band and bandwidth runs. Built from an
//! optional JSON file merged with command-line flags; unknown keys are
//! rejected.
struct RunConfig
{
  std::string input;
  std::string y = "y";
  std::string a = "a";
  //! Empty means every column other than y and a.
  std::vector<std::string> w;
  std::string kernel = "epanechnikov";
  std::string estimator = "debiased";
  //! manual, plugin, loocv or loocv-fixed-tau
  std::string bandwidth = "plugin";
  std::optional<double> h;
  std::optional<double> b;
  double tau = 1.0;
  std::vector<double> h_grid;
  std::vector<double> b_grid;
  std::optional<double> pilot_h1;
  std::optional<std::int64_t> knn_k;
  std::int64_t omega_size = 50;
  //! fit, precomputed or oracle
  std::string nuisance = "fit";
  std::string mu_file;
  std::string g_file;
  std::vector<double> grid;
  std::optional<double> grid_lower;
  std::optional<double> grid_upper;
  std::optional<std::int64_t> grid_size;
  double alpha = 0.05;
  std::int64_t draws = 20000;
  std::optional<std::uint64_t> seed;
  std::optional<double> truncate_g;
  bool fast_eif = true;
  //! influence-function or diagonal
  std::string covariance = "influence-function";
  std::string out;

  static RunConfig from_json(const io::json& j);
  io::json to_json() const;
};

//! Runs the tool with the given arguments and returns the exit status:
//! 0 success, 2 configuration error, 3 data error, 4 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace drcurve::cli
