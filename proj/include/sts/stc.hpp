#pragma once

// Stacked spatiotemporal-semantic layers: semantic self-attention over the
// category axis (MSA), a per-(region, category) GRU over time (TRR), and graph
// attention combined with positional-encoded cross-attention between a region
// and each of its neighbours (DSA).
//
// Feature tensors are N x T x C x d throughout.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sts/region_graph.hpp"
#include "sts/tensor.hpp"

namespace sts::stc {

enum class Activation { kSigmoid, kTanh, kIdentity };

Activation parse_activation(const std::string& text);
std::string to_string(Activation a);

struct Options {
  std::size_t heads = 1;
  bool self_loop = true;
  Activation activation = Activation::kSigmoid;
  double leaky_slope = 0.2;
};

// Per-head projections are stored stacked as [H, d/H, d]; head h owns rows
// [h*d/H, (h+1)*d/H) of the equivalent d x d matrix.
struct MsaParams {
  Tensor query, key, value;  // [H, d/H, d]
  Tensor out;                // [d, d]
};

struct TrrParams {
  Tensor reset, update, candidate;  // [d, 2d], acting on [h_prev, m_t]
  Tensor output;                    // [d, d]
};

struct GatParams {
  Tensor weight;     // [d, d]
  Tensor attention;  // [2d]
};

struct NtaParams {
  Tensor query, key, value;  // [H, d/H, d]
  Tensor out;                // [d, d]
};

/// Components left undefined are bypassed (identity), which is how the
/// ablation variants are built.
struct StcLayerParams {
  MsaParams msa;
  TrrParams trr;
  GatParams gat;
  NtaParams nta;

  bool has_msa() const { return msa.query.defined(); }
  bool has_trr() const { return trr.reset.defined(); }
  bool has_dsa() const { return gat.weight.defined(); }
};

struct MsaResult {
  Tensor out;      // N x T x C x d
  Tensor weights;  // [N*T*H, C, C], row (r*T + t)*H + h
};

MsaResult msa_forward(const Tensor& e, const MsaParams& p, std::size_t heads);

Tensor trr_forward(const Tensor& m, const TrrParams& p);

/// Ordered (target, source) pairs of the aggregation support, grouped by target.
std::vector<std::pair<std::size_t, std::size_t>> support_pairs(const RegionGraph& g, bool self_loop);

/// N x N attention over neighbourhoods; exactly zero off the support.
Tensor gat_weights(const Tensor& mt, const RegionGraph& g, const GatParams& p, const Options& opt);

struct NtaResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Tensor out;      // [P, T, C, d]
  Tensor weights;  // [P*C*H, T, T], row (p*C + c)*H + h
};

NtaResult nta_forward(const Tensor& mt, const RegionGraph& g, const Tensor& pe, const NtaParams& p,
                      const Options& opt);

struct DsaResult {
  Tensor out;      // N x T x C x d
  Tensor spatial;  // N x N
  NtaResult temporal;
};

DsaResult dsa_forward(const Tensor& mt, const RegionGraph& g, const Tensor& pe, const GatParams& gat,
                      const NtaParams& nta, const Options& opt);

struct LayerResult {
  Tensor out;
  Tensor semantic;  // undefined when MSA is bypassed
  Tensor spatial;   // undefined when DSA is bypassed
  NtaResult temporal;
};

LayerResult stc_layer(const Tensor& e, const RegionGraph& g, const Tensor& pe, const StcLayerParams& p,
                      const Options& opt);

class AttentionTrace;

/// [E0, E1, ..., EL]. Attention weights are appended to `trace` when given.
std::vector<Tensor> stc_stack(const Tensor& e0, const RegionGraph& g, const Tensor& pe,
                              const std::vector<StcLayerParams>& layers, const Options& opt,
                              AttentionTrace* trace = nullptr);

/// Flat attention export. Every row-normalised distribution is identified by
/// (layer, kind, head, query); the query index flattens its context:
///   semantic: query = (region*T + t)*C + c_query,   key = c_key
///   spatial:  query = target region,                key = source region (support only)
///   temporal: query = ((target*N + source)*C + c)*T + t,  key = t'
class AttentionTrace {
 public:
  struct Row {
    std::size_t layer = 0;
    std::string kind;
    std::size_t head = 0;
    std::size_t query = 0;
    std::size_t key = 0;
    double weight = 0.0;
    bool operator==(const Row&) const = default;
  };

  void record(std::size_t layer, const LayerResult& result, std::size_t n_regions, std::size_t t_len,
              std::size_t n_categories, std::size_t heads);

  const std::vector<Row>& rows() const { return rows_; }
  void clear() { rows_.clear(); }

  void write_csv(std::ostream& out) const;
  static AttentionTrace read_csv(std::istream& in);

 private:
  std::vector<Row> rows_;
};

}  // namespace sts::stc
