#include "drcurve/io.hpp"

#include "drcurve/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drcurve::io {

namespace {

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line)
{
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    out.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

double parse_number(const std::string& text, const std::string& where)
{
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (!text.empty() && *begin == '+') {
    ++begin;
  }
  const auto res = std::from_chars(begin, end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw Error(ErrorKind::InvalidData, "non-numeric or non-finite value '" + text + "' " + where);
  }
  return v;
}

} // namespace

Index Table::column_index(const std::string& name) const
{
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] == name) {
      return static_cast<Index>(k);
    }
  }
  throw Error(ErrorKind::InvalidData, "missing column '" + name + "'");
}

VectorXd Table::column(const std::string& name) const
{
  const Index c = column_index(name);
  VectorXd v(size());
  for (Index i = 0; i < size(); ++i) {
    v[i] = rows[i][c];
  }
  return v;
}

Table parse_csv(std::istream& in, const std::string& source)
{
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (trim(line).empty() || line.front() == '#') {
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      t.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw Error(ErrorKind::InvalidData, source + ":" + std::to_string(lineno) + ": expected " +
                                            std::to_string(t.columns.size()) + " fields, got " +
                                            std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      row[k] = parse_number(fields[k], "in column '" + t.columns[k] + "' at " + source + ":" +
                                         std::to_string(lineno));
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw Error(ErrorKind::InvalidData, source + ": missing header line");
  }
  return t;
}

Table read_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::InvalidData, "cannot open '" + path + "'");
  }
  return parse_csv(in, path);
}

std::string format_double(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows,
               const std::string& manifest_hash)
{
  if (!manifest_hash.empty()) {
    out << "# manifest_hash=" << manifest_hash << '\n';
  }
  for (std::size_t k = 0; k < columns.size(); ++k) {
    out << (k ? "," : "") << columns[k];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      out << (k ? "," : "") << format_double(row[k]);
    }
    out << '\n';
  }
}

Dataset dataset_from_table(const Table& t,
                           const std::string& y,
                           const std::string& a,
                           const std::vector<std::string>& w)
{
  Dataset d;
  d.y = t.column(y);
  d.a = t.column(a);
  d.w.resize(t.size(), static_cast<Index>(w.size()));
  for (std::size_t k = 0; k < w.size(); ++k) {
    d.w.col(static_cast<Index>(k)) = t.column(w[k]);
  }
  d.validate();
  return d;
}

NuisanceModel read_precomputed_nuisance(const std::string& mu_path,
                                        const std::string& g_path,
                                        Index n)
{
  const Table mu = read_csv(mu_path);
  const Index a_col = mu.column_index("a");
  if (a_col != 0) {
    throw Error(ErrorKind::ShapeMismatch, mu_path + ": first column must be 'a'");
  }
  if (static_cast<Index>(mu.columns.size()) != n + 1) {
    throw Error(ErrorKind::ShapeMismatch,
                mu_path + ": expected " + std::to_string(n) + " mu columns, got " +
                  std::to_string(mu.columns.size() - 1));
  }
  const Index grid = mu.size();
  VectorXd a(grid);
  MatrixXd table(grid, n);
  for (Index r = 0; r < grid; ++r) {
    a[r] = mu.rows[r][0];
    for (Index j = 0; j < n; ++j) {
      table(r, j) = mu.rows[r][j + 1];
    }
  }

  const Table g = read_csv(g_path);
  MatrixXd g_values;
  if (g.columns.size() == 1 && g.columns[0] == "g") {
    g_values = g.column("g");
  } else {
    if (g.column_index("a") != 0 || static_cast<Index>(g.columns.size()) != n + 1 ||
        g.size() != grid) {
      throw Error(ErrorKind::ShapeMismatch,
                  g_path + ": expected a single 'g' column or 'a' plus " + std::to_string(n) +
                    " columns on the mu grid");
    }
    g_values.resize(grid, n);
    for (Index r = 0; r < grid; ++r) {
      if (g.rows[r][0] != a[r]) {
        throw Error(ErrorKind::ShapeMismatch, g_path + ": grid differs from the mu grid");
      }
      for (Index j = 0; j < n; ++j) {
        g_values(r, j) = g.rows[r][j + 1];
      }
    }
  }
  return load_precomputed_nuisance(a, table, g_values);
}

std::uint64_t fnv1a(const std::string& bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string manifest_hash(const json& manifest)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(manifest.dump())));
  return buf;
}

json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::InvalidConfig, "cannot open config '" + path + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& content)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::InvalidConfig, "cannot write '" + path + "'");
  }
  out << content;
}

void check_keys(const json& object, const std::vector<std::string>& allowed,
                const std::string& context)
{
  if (!object.is_object()) {
    throw Error(ErrorKind::InvalidConfig, context + " must be a JSON object");
  }
  for (const auto& item : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + item.key() + "' in " + context);
    }
  }
}

} // namespace drcurve::io
