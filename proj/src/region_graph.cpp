#include "sts/region_graph.hpp"

#include <fstream>
#include <sstream>

#include "sts/errors.hpp"

namespace sts {

bool RegionGraph::adjacent(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) throw ArgumentError("region index out of range");
  return adjacency_[i * n_ + j] != 0;
}

const std::vector<std::size_t>& RegionGraph::neighbors(std::size_t i) const {
  if (i >= n_) {
    throw ArgumentError("region " + std::to_string(i) + " out of range for graph of " + std::to_string(n_));
  }
  return neighbors_[i];
}

std::size_t RegionGraph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& nb : neighbors_) twice += nb.size();
  return twice / 2;
}

void RegionGraph::rebuild_neighbors() {
  neighbors_.assign(n_, {});
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if (adjacency_[i * n_ + j]) neighbors_[i].push_back(j);
}

RegionGraph RegionGraph::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != n_) throw ArgumentError("permutation length does not match graph size");
  RegionGraph g;
  g.n_ = n_;
  g.adjacency_.assign(n_ * n_, 0);
  for (std::size_t a = 0; a < n_; ++a)
    for (std::size_t b = 0; b < n_; ++b) g.adjacency_[a * n_ + b] = adjacency_[perm[a] * n_ + perm[b]];
  g.rebuild_neighbors();
  return g;
}

RegionGraph build_grid_graph(std::size_t rows, std::size_t cols, GridNeighborhood hood) {
  if (rows == 0 || cols == 0) throw ArgumentError("grid dimensions must be positive");
  RegionGraph g;
  g.n_ = rows * cols;
  g.grid_ = std::make_pair(rows, cols);
  g.adjacency_.assign(g.n_ * g.n_, 0);
  const bool corners = hood == GridNeighborhood::kEdgeAndCorner;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (dr != 0 && dc != 0 && !corners) continue;
          const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
          const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(rows) || cc >= static_cast<std::ptrdiff_t>(cols))
            continue;
          g.adjacency_[(r * cols + c) * g.n_ + static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(cc)] = 1;
        }
  g.rebuild_neighbors();
  return g;
}

RegionGraph build_region_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (n == 0) throw ArgumentError("graph needs at least one region");
  RegionGraph g;
  g.n_ = n;
  g.adjacency_.assign(n * n, 0);
  for (auto [i, j] : edges) {
    if (i >= n || j >= n) {
      throw ArgumentError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range for " +
                          std::to_string(n) + " regions");
    }
    if (i == j) throw ArgumentError("self-edge on region " + std::to_string(i));
    g.adjacency_[i * n + j] = 1;
    g.adjacency_[j * n + i] = 1;
  }
  g.rebuild_neighbors();
  return g;
}

RegionGraph parse_graph_spec(const std::string& text, GridNeighborhood hood) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::string kind;
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  auto fail = [&](const std::string& why) {
    throw DataError("graph spec line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (kind.empty()) {
      ls >> kind;
      if (kind == "grid") {
        long long rows = -1, cols = -1;
        if (!(ls >> rows >> cols) || rows <= 0 || cols <= 0) fail("expected `grid ROWS COLS` with positive sizes");
        return build_grid_graph(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), hood);
      }
      if (kind != "regions") fail("expected `grid` or `regions` header, got `" + kind + "`");
      long long count = -1;
      if (!(ls >> count) || count <= 0) fail("expected `regions N` with positive N");
      n = static_cast<std::size_t>(count);
      continue;
    }
    long long i = -1, j = -1;
    std::string extra;
    if (!(ls >> i >> j) || (ls >> extra) || i < 0 || j < 0) fail("expected `i j` edge");
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  if (kind.empty()) throw DataError("graph spec is empty");
  try {
    return build_region_graph(n, edges);
  } catch (const ArgumentError& e) {
    throw DataError(std::string("graph spec: ") + e.what());
  }
}

RegionGraph load_graph_spec(const std::filesystem::path& path, GridNeighborhood hood) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph spec " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph_spec(buf.str(), hood);
}

std::string format_graph_spec(const RegionGraph& g) {
  std::ostringstream out;
  if (auto dims = g.grid_dims()) {
    out << "grid " << dims->first << ' ' << dims->second << '\n';
    return out.str();
  }
  out << "regions " << g.size() << '\n';
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j : g.neighbors(i))
      if (j > i) out << i << ' ' << j << '\n';
  return out.str();
}

}  // namespace sts
