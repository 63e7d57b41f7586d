#include "support.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sts/region_graph.hpp"

namespace sts::test {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad) {
  return Tensor::from(shape, random_values(numel(shape), rng, lo, hi), requires_grad);
}

stc::StcLayerParams random_layer(std::size_t d, std::size_t heads, Rng& rng, double scale, LayerParts parts,
                                 bool requires_grad) {
  auto mat = [&](Shape s) { return random_tensor(s, rng, -scale, scale, requires_grad); };
  const std::size_t dh = d / heads;
  stc::StcLayerParams p;
  if (parts.msa) {
    p.msa.query = mat({heads, dh, d});
    p.msa.key = mat({heads, dh, d});
    p.msa.value = mat({heads, dh, d});
    p.msa.out = mat({d, d});
  }
  if (parts.trr) {
    p.trr.reset = mat({d, 2 * d});
    p.trr.update = mat({d, 2 * d});
    p.trr.candidate = mat({d, 2 * d});
    p.trr.output = mat({d, d});
  }
  if (parts.dsa) {
    p.gat.weight = mat({d, d});
    p.gat.attention = mat({2 * d});
    p.nta.query = mat({heads, dh, d});
    p.nta.key = mat({heads, dh, d});
    p.nta.value = mat({heads, dh, d});
    p.nta.out = mat({d, d});
  }
  return p;
}

RegionGraph random_graph(std::size_t n, double p, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return build_region_graph(n, edges);
}

RegionGraph path_graph(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return build_region_graph(n, edges);
}

TempDir::TempDir() {
  static std::mt19937_64 counter(std::random_device{}());
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto candidate = std::filesystem::temp_directory_path() / ("sts_test_" + std::to_string(counter()));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace sts::test
