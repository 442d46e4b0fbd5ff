#pragma once

#include "drcurve/nuisance.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace drcurve::io {

using nlohmann::json;

//! A parsed numeric CSV table: header names and row-major values.
struct Table
{
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  Index column_index(const std::string& name) const;
  VectorXd column(const std::string& name) const;
  Index size() const { return static_cast<Index>(rows.size()); }
};

//! Comma-separated, header required, '.' decimal point. Lines starting
//! with '#' are comments. Throws InvalidData on malformed or non-finite
//! fields and on ragged rows.
Table parse_csv(std::istream& in, const std::string& source = "<stream>");
Table read_csv(const std::string& path);

//! 17 significant digits, enough to parse back to the same double.
std::string format_double(double v);

void write_csv(std::ostream& out,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows,
               const std::string& manifest_hash = {});

//! Dataset from named columns; missing columns raise InvalidData naming
//! the column.
Dataset dataset_from_table(const Table& t,
                           const std::string& y,
                           const std::string& a,
                           const std::vector<std::string>& w);

//! Precomputed nuisance files: mu file has columns a, mu_1..mu_n; the g
//! file is either a, g_1..g_n on the same grid or a single column g with
//! one row per observation.
NuisanceModel read_precomputed_nuisance(const std::string& mu_path,
                                        const std::string& g_path,
                                        Index n);

//! 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

//! Hex FNV-1a of the canonical (sorted-key, compact) serialization.
std::string manifest_hash(const json& manifest);

json read_json(const std::string& path);
void write_text(const std::string& path, const std::string& content);

//! Rejects keys outside `allowed` with InvalidConfig.
void check_keys(const json& object, const std::vector<std::string>& allowed,
                const std::string& context);

} // namespace drcurve::io
