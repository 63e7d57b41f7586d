#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sts {

enum class GridNeighborhood { kEdge = 4, kEdgeAndCorner = 8 };

/// Undirected region network with a symmetric, zero-diagonal binary adjacency.
class RegionGraph {
 public:
  RegionGraph() = default;

  std::size_t size() const { return n_; }
  bool adjacent(std::size_t i, std::size_t j) const;
  /// Sorted neighbours of region i, never containing i itself.
  const std::vector<std::size_t>& neighbors(std::size_t i) const;
  std::size_t edge_count() const;

  /// Row-major N*N 0/1 matrix.
  const std::vector<std::uint8_t>& adjacency() const { return adjacency_; }

  /// Present for grid graphs so the graph file can be written back.
  std::optional<std::pair<std::size_t, std::size_t>> grid_dims() const { return grid_; }

  /// Regions relabelled so that new index k holds old region perm[k].
  RegionGraph permuted(const std::vector<std::size_t>& perm) const;

  friend RegionGraph build_grid_graph(std::size_t rows, std::size_t cols, GridNeighborhood hood);
  friend RegionGraph build_region_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

 private:
  void rebuild_neighbors();

  std::size_t n_ = 0;
  std::vector<std::uint8_t> adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::optional<std::pair<std::size_t, std::size_t>> grid_;
};

/// Row-major grid; cells sharing an edge are adjacent (corners too with kEdgeAndCorner).
RegionGraph build_grid_graph(std::size_t rows, std::size_t cols, GridNeighborhood hood = GridNeighborhood::kEdge);

/// Administrative regions from an undirected edge list; duplicates and
/// reversed pairs collapse to one edge.
RegionGraph build_region_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

/// Reads `grid ROWS COLS` or `regions N` followed by `i j` lines; '#' starts a comment line.
RegionGraph parse_graph_spec(const std::string& text, GridNeighborhood hood = GridNeighborhood::kEdge);
RegionGraph load_graph_spec(const std::filesystem::path& path, GridNeighborhood hood = GridNeighborhood::kEdge);
std::string format_graph_spec(const RegionGraph& g);

}  // namespace sts
