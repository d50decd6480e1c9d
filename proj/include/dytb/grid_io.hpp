#pragma once

// Portable serialization of grid functions: CSV (header line "# dim,depth",
// then one value per line in row-major cell order) and JSON {dim, depth, values}.

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>

#include "json.hpp"

#include "dytb/dyadic.hpp"

namespace dytb {

/// Shortest representation that round-trips; identical across runs.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

inline void write_csv(std::ostream& os, const GridFunction& f) {
  os << "# " << f.spec().dim() << ',' << f.spec().depth() << '\n';
  for (double v : f.values()) os << format_double(v) << '\n';
}

inline GridFunction read_csv(std::istream& is) {
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("grid CSV line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty()) break;
  }
  if (line.size() < 2 || line[0] != '#') fail("expected header '# dim,depth'");
  int dim = 0;
  int depth = 0;
  {
    std::istringstream hs(line.substr(1));
    char comma = 0;
    if (!(hs >> dim >> comma >> depth) || comma != ',') fail("malformed header '" + line + "'");
  }
  const GridSpec spec(dim, depth);
  std::vector<double> values;
  values.reserve(spec.cells());
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    try {
      values.push_back(parse_double(line));
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (values.size() != spec.cells())
    fail("expected " + std::to_string(spec.cells()) + " values, found " + std::to_string(values.size()));
  return GridFunction(spec, std::move(values));
}

inline nlohmann::json to_json(const GridFunction& f) {
  nlohmann::json j;
  j["dim"] = f.spec().dim();
  j["depth"] = f.spec().depth();
  j["values"] = std::vector<double>(f.values().begin(), f.values().end());
  return j;
}

inline GridFunction grid_function_from_json(const nlohmann::json& j) {
  const GridSpec spec(j.at("dim").get<int>(), j.at("depth").get<int>());
  return GridFunction(spec, j.at("values").get<std::vector<double>>());
}

}  // namespace dytb
