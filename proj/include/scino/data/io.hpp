#pragma once

#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/data/dag.hpp"
#include "scino/data/dataset.hpp"

namespace scino {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
  const std::string s = trim(raw);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    throw DataError("CSV: non-numeric or non-finite cell '" + s + "' at row " + std::to_string(row) + ", column " +
                    std::to_string(col + 1));
  }
  return v;
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV: missing header row");
  std::vector<std::string> names;
  for (const auto& c : detail::split_csv_line(line)) names.push_back(detail::trim(c));
  if (names.empty() || (names.size() == 1 && names[0].empty())) throw DataError("CSV: empty header row");
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != names.size()) {
      throw DataError("CSV: row " + std::to_string(rows + 1) + " has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(names.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) data.push_back(detail::parse_cell(cells[c], rows + 1, c));
    ++rows;
  }
  const std::size_t cols = names.size();
  return Dataset(std::move(names), RealTensor({rows, cols}, std::move(data)));
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path);
  return parse_csv(in);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t c = 0; c < ds.d(); ++c) out << (c ? "," : "") << ds.names[c];
  out << "\n" << std::setprecision(17);
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (std::size_t c = 0; c < ds.d(); ++c) out << (c ? "," : "") << ds.values(r, c);
    out << "\n";
  }
}

inline void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write CSV file " + path);
  write_csv(out, ds);
  if (!out) throw ConfigError("failed writing " + path);
}

inline nlohmann::json graph_to_json(const Dag& g) {
  nlohmann::json e = nlohmann::json::array();
  for (auto [i, j] : g.edges()) e.push_back({i, j});
  return {{"nodes", g.names()}, {"edges", e}};
}

inline Dag graph_from_json(const nlohmann::json& j) {
  try {
    Dag g(j.at("nodes").get<std::vector<std::string>>());
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw DataError("graph JSON: each edge must be [i, j]");
      g.add_edge(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("graph JSON: ") + ex.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("malformed JSON in " + path + ": " + ex.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline Dag load_graph_json(const std::string& path) { return graph_from_json(read_json_file(path)); }
inline void save_graph_json(const std::string& path, const Dag& g) { write_json_file(path, graph_to_json(g)); }

}  // namespace scino
