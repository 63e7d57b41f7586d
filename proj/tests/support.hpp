#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sts/stc.hpp"
#include "sts/tensor.hpp"

namespace sts::test {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0);
Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false);

struct LayerParts {
  bool msa = true, trr = true, dsa = true;
};
stc::StcLayerParams random_layer(std::size_t d, std::size_t heads, Rng& rng, double scale = 0.8,
                                 LayerParts parts = {}, bool requires_grad = false);

/// Random undirected graph where each pair is joined with probability `p`.
RegionGraph random_graph(std::size_t n, double p, Rng& rng);
RegionGraph path_graph(std::size_t n);

/// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sts::test
