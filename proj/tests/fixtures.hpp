#pragma once

#include "saver/feeder.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fixture {

inline std::string data(const std::string& name) { return std::string(SAVER_DATA_DIR) + "/" + name; }

/// Feeder from (parent, child) edges; every non-root bus controllable with
/// a box of +-q_box.
inline saver::Feeder tree(const std::vector<std::pair<int, int>>& edges, const std::vector<double>& r,
                          const std::vector<double>& x, double q_box = 0.1) {
  std::vector<saver::Bus> buses(edges.size() + 1);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    buses[i].id = static_cast<int>(i);
    buses[i].name = "b" + std::to_string(i);
    buses[i].controllable = i > 0;
    buses[i].q_min = i > 0 ? -q_box : 0.0;
    buses[i].q_max = i > 0 ? q_box : 0.0;
  }
  std::vector<saver::Line> lines;
  for (std::size_t e = 0; e < edges.size(); ++e) lines.push_back({edges[e].first, edges[e].second, r[e], x[e]});
  return saver::Feeder(buses, lines, {}, {});
}

inline saver::Feeder chain(int n, double r, double x) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i <= n; ++i) edges.emplace_back(i - 1, i);
  return tree(edges, std::vector<double>(n, r), std::vector<double>(n, x));
}

inline saver::Feeder star(int n, double r, double x) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i <= n; ++i) edges.emplace_back(0, i);
  return tree(edges, std::vector<double>(n, r), std::vector<double>(n, x));
}

/// Random recursive tree: bus i attaches to a uniformly chosen earlier bus.
inline saver::Feeder random_tree(int n, std::mt19937_64& rng, double zmin = 0.005, double zmax = 0.05,
                                 double q_box = 0.1) {
  std::uniform_real_distribution<double> z(zmin, zmax);
  std::vector<std::pair<int, int>> edges;
  std::vector<double> r, x;
  for (int i = 1; i <= n; ++i) {
    std::uniform_int_distribution<int> parent(0, i - 1);
    edges.emplace_back(parent(rng), i);
    r.push_back(z(rng));
    x.push_back(z(rng));
  }
  return tree(edges, r, x, q_box);
}

}  // namespace fixture
