#include "sts/stc.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "sts/errors.hpp"
#include "sts/ops.hpp"

namespace sts::stc {

namespace {

struct Dims {
  std::size_t n, t, c, d;
};

Dims dims_of(const Tensor& x, const char* who) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(who) + ": expected N x T x C x d features, got " + sts::to_string(x.shape()));
  }
  return {x.extent(0), x.extent(1), x.extent(2), x.extent(3)};
}

std::size_t head_width(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  return d / heads;
}

Tensor stacked_matrix(const Tensor& w, std::size_t d) { return ops::reshape(w, {d, d}); }

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kSigmoid:
      return ops::sigmoid(x);
    case Activation::kTanh:
      return ops::tanh(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

}  // namespace

Activation parse_activation(const std::string& text) {
  if (text == "sigmoid") return Activation::kSigmoid;
  if (text == "tanh") return Activation::kTanh;
  if (text == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation `" + text + "` (expected sigmoid, tanh or identity)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "sigmoid";
}

MsaResult msa_forward(const Tensor& e, const MsaParams& p, std::size_t heads) {
  const auto [N, T, C, d] = dims_of(e, "msa_forward");
  const std::size_t dh = head_width(d, heads);
  const std::size_t cells = N * T;

  const Tensor x = ops::reshape(e, {cells, C, d});
  auto split_heads = [&](const Tensor& w) {
    Tensor proj = ops::linear(x, stacked_matrix(w, d));  // [cells, C, d]
    proj = ops::permute(ops::reshape(proj, {cells, C, heads, dh}), {0, 2, 1, 3});
    return ops::reshape(proj, {cells * heads, C, dh});
  };
  const Tensor q = split_heads(p.query);
  const Tensor k = split_heads(p.key);
  const Tensor v = split_heads(p.value);

  const Tensor scores = ops::scale(ops::bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor alpha = ops::softmax(scores, 2);
  Tensor merged = ops::bmm(alpha, v);  // [cells*H, C, dh]
  merged = ops::reshape(ops::permute(ops::reshape(merged, {cells, heads, C, dh}), {0, 2, 1, 3}), {cells, C, d});
  Tensor out = ops::linear(merged, p.out);
  return {ops::reshape(out, {N, T, C, d}), alpha};
}

Tensor trr_forward(const Tensor& m, const TrrParams& p) {
  const auto [N, T, C, d] = dims_of(m, "trr_forward");
  const std::size_t lanes = N * C;
  const Tensor seq = ops::reshape(ops::permute(m, {1, 0, 2, 3}), {T, lanes, d});

  Tensor h = Tensor::zeros({lanes, d});
  std::vector<Tensor> outputs;
  outputs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor xt = ops::reshape(ops::slice(seq, 0, t, 1), {lanes, d});
    const Tensor hx = ops::concat({h, xt}, 1);
    const Tensor r = ops::sigmoid(ops::linear(hx, p.reset));
    const Tensor z = ops::sigmoid(ops::linear(hx, p.update));
    const Tensor cand = ops::tanh(ops::linear(ops::concat({ops::mul(r, h), xt}, 1), p.candidate));
    // (1 - z) * h + z * cand
    h = ops::add(h, ops::mul(z, ops::sub(cand, h)));
    outputs.push_back(ops::sigmoid(ops::linear(h, p.output)));
  }
  const Tensor stacked = ops::reshape(ops::stack(outputs, 0), {T, N, C, d});
  return ops::permute(stacked, {1, 0, 2, 3});
}

std::vector<std::pair<std::size_t, std::size_t>> support_pairs(const RegionGraph& g, bool self_loop) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& nb = g.neighbors(i);
    bool placed_self = !self_loop;
    for (std::size_t j : nb) {
      if (!placed_self && i < j) {
        pairs.emplace_back(i, i);
        placed_self = true;
      }
      pairs.emplace_back(i, j);
    }
    if (!placed_self) pairs.emplace_back(i, i);
  }
  return pairs;
}

Tensor gat_weights(const Tensor& mt, const RegionGraph& g, const GatParams& p, const Options& opt) {
  const auto [N, T, C, d] = dims_of(mt, "gat_weights");
  if (g.size() != N) {
    throw DimensionError("gat_weights: graph has " + std::to_string(g.size()) + " regions, features have " +
                         std::to_string(N));
  }
  const Tensor pooled = ops::mean(ops::mean(mt, 1), 1);  // [N, d]
  const Tensor proj = ops::linear(pooled, p.weight);
  const Tensor a_target = ops::reshape(ops::slice(p.attention, 0, 0, d), {1, d});
  const Tensor a_source = ops::reshape(ops::slice(p.attention, 0, d, d), {1, d});
  const Tensor s_target = ops::linear(proj, a_target);  // [N, 1]
  const Tensor s_source = ops::linear(proj, a_source);
  const Tensor ones_row = Tensor::ones({1, N});
  const Tensor ones_col = Tensor::ones({N, 1});
  const Tensor scores =
      ops::add(ops::matmul(s_target, ones_row), ops::matmul(ones_col, ops::transpose(s_source)));

  std::vector<std::uint8_t> mask(N * N, 0);
  for (auto [i, j] : support_pairs(g, opt.self_loop)) mask[i * N + j] = 1;
  return ops::masked_softmax(ops::leaky_relu(scores, opt.leaky_slope), mask);
}

NtaResult nta_forward(const Tensor& mt, const RegionGraph& g, const Tensor& pe, const NtaParams& p,
                      const Options& opt) {
  const auto [N, T, C, d] = dims_of(mt, "nta_forward");
  const std::size_t heads = opt.heads;
  const std::size_t dh = head_width(d, heads);
  if (pe.rank() != 2 || pe.extent(0) != T || pe.extent(1) != d) {
    throw DimensionError("nta_forward: positional encoding " + sts::to_string(pe.shape()) + " does not match T=" +
                         std::to_string(T) + ", d=" + std::to_string(d));
  }
  if (g.size() != N) throw DimensionError("nta_forward: graph and features disagree on region count");

  std::vector<double> pe_full(N * T * C * d);
  const auto pev = pe.data();
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(pev.data() + t * d, d, pe_full.data() + ((r * T + t) * C + c) * d);
  const Tensor encoded = ops::add(mt, Tensor::from({N, T, C, d}, std::move(pe_full)));

  // [N, C, H, T, dh]
  auto project = [&](const Tensor& w) {
    const Tensor proj = ops::reshape(ops::linear(encoded, stacked_matrix(w, d)), {N, T, C, heads, dh});
    return ops::permute(proj, {0, 2, 3, 1, 4});
  };
  const Tensor q = project(p.query);
  const Tensor k = project(p.key);
  const Tensor v = project(p.value);

  NtaResult res;
  res.pairs = support_pairs(g, opt.self_loop);
  const std::size_t P = res.pairs.size();
  std::vector<std::size_t> targets(P), sources(P);
  for (std::size_t i = 0; i < P; ++i) {
    targets[i] = res.pairs[i].first;
    sources[i] = res.pairs[i].second;
  }
  const std::size_t batch = P * C * heads;
  const Tensor qp = ops::reshape(ops::index_select(q, targets), {batch, T, dh});
  const Tensor kp = ops::reshape(ops::index_select(k, sources), {batch, T, dh});
  const Tensor vp = ops::reshape(ops::index_select(v, sources), {batch, T, dh});

  const Tensor scores = ops::scale(ops::bmm_nt(qp, kp), 1.0 / std::sqrt(static_cast<double>(dh)));
  res.weights = ops::softmax(scores, 2);
  Tensor merged = ops::reshape(ops::bmm(res.weights, vp), {P, C, heads, T, dh});
  merged = ops::reshape(ops::permute(merged, {0, 3, 1, 2, 4}), {P, T, C, d});
  res.out = ops::linear(merged, p.out);
  return res;
}

DsaResult dsa_forward(const Tensor& mt, const RegionGraph& g, const Tensor& pe, const GatParams& gat,
                      const NtaParams& nta, const Options& opt) {
  const std::size_t N = mt.extent(0);
  DsaResult res;
  res.spatial = gat_weights(mt, g, gat, opt);
  res.temporal = nta_forward(mt, g, pe, nta, opt);

  const auto& pairs = res.temporal.pairs;
  std::vector<std::size_t> flat(pairs.size()), targets(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    flat[i] = pairs[i].first * N + pairs[i].second;
    targets[i] = pairs[i].first;
  }
  const Tensor pair_weights = ops::index_select(ops::reshape(res.spatial, {N * N}), flat);
  const Tensor weighted = ops::scale_rows(res.temporal.out, pair_weights);
  res.out = activate(ops::index_add(weighted, targets, N), opt.activation);
  return res;
}

LayerResult stc_layer(const Tensor& e, const RegionGraph& g, const Tensor& pe, const StcLayerParams& p,
                      const Options& opt) {
  LayerResult res;
  Tensor m = e;
  if (p.has_msa()) {
    MsaResult msa = msa_forward(e, p.msa, opt.heads);
    m = msa.out;
    res.semantic = msa.weights;
  }
  const Tensor mt = p.has_trr() ? trr_forward(m, p.trr) : m;
  if (p.has_dsa()) {
    DsaResult dsa = dsa_forward(mt, g, pe, p.gat, p.nta, opt);
    res.out = dsa.out;
    res.spatial = dsa.spatial;
    res.temporal = std::move(dsa.temporal);
  } else {
    res.out = mt;
  }
  return res;
}

std::vector<Tensor> stc_stack(const Tensor& e0, const RegionGraph& g, const Tensor& pe,
                              const std::vector<StcLayerParams>& layers, const Options& opt,
                              AttentionTrace* trace) {
  if (layers.empty()) throw ArgumentError("stc_stack needs at least one layer");
  const auto [N, T, C, d] = dims_of(e0, "stc_stack");
  std::vector<Tensor> out{e0};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerResult res = stc_layer(out.back(), g, pe, layers[l], opt);
    if (trace) trace->record(l, res, N, T, C, opt.heads);
    out.push_back(res.out);
  }
  return out;
}

void AttentionTrace::record(std::size_t layer, const LayerResult& result, std::size_t n_regions,
                            std::size_t t_len, std::size_t n_categories, std::size_t heads) {
  const std::size_t N = n_regions, T = t_len, C = n_categories, H = heads;
  if (result.semantic.defined()) {
    const auto w = result.semantic.data();
    for (std::size_t cell = 0; cell < N * T; ++cell)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t ci = 0; ci < C; ++ci)
          for (std::size_t cj = 0; cj < C; ++cj)
            rows_.push_back({layer, "semantic", h, cell * C + ci, cj, w[((cell * H + h) * C + ci) * C + cj]});
  }
  if (result.spatial.defined()) {
    const auto w = result.spatial.data();
    for (auto [i, j] : result.temporal.pairs) rows_.push_back({layer, "spatial", 0, i, j, w[i * N + j]});
  }
  if (result.temporal.weights.defined()) {
    const auto w = result.temporal.weights.data();
    const auto& pairs = result.temporal.pairs;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t u = 0; u < T; ++u) {
              const std::size_t query = ((pairs[p].first * N + pairs[p].second) * C + c) * T + t;
              rows_.push_back({layer, "temporal", h, query, u, w[(((p * C + c) * H + h) * T + t) * T + u]});
            }
  }
}

void AttentionTrace::write_csv(std::ostream& out) const {
  out << "layer,kind,head,query_index,key_index,weight\n";
  char buf[64];
  for (const auto& r : rows_) {
    const auto res = std::to_chars(buf, buf + sizeof buf, r.weight);
    out << r.layer << ',' << r.kind << ',' << r.head << ',' << r.query << ',' << r.key << ',';
    out.write(buf, res.ptr - buf) << '\n';
  }
}

AttentionTrace AttentionTrace::read_csv(std::istream& in) {
  AttentionTrace trace;
  std::string line;
  if (!std::getline(in, line) || line.rfind("layer,kind,head,query_index,key_index,weight", 0) != 0) {
    throw DataError("attention trace: missing header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw DataError("attention trace line " + std::to_string(line_no) + ": expected 6 fields");
    try {
      Row r;
      r.layer = std::stoul(fields[0]);
      r.kind = fields[1];
      r.head = std::stoul(fields[2]);
      r.query = std::stoul(fields[3]);
      r.key = std::stoul(fields[4]);
      r.weight = std::stod(fields[5]);
      trace.rows_.push_back(std::move(r));
    } catch (const std::exception&) {
      throw DataError("attention trace line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return trace;
}

}  // namespace sts::stc
