#include "sts/model.hpp"

#include <cmath>
#include <random>

#include "sts/errors.hpp"
#include "sts/features.hpp"
#include "sts/ops.hpp"

namespace sts {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

ModelSpec ModelSpec::from(const TrainConfig& cfg, std::size_t n_regions, std::size_t n_categories) {
  ModelSpec s;
  s.n_regions = n_regions;
  s.n_categories = n_categories;
  s.t_window = cfg.t_window;
  s.d = cfg.d;
  s.layers = cfg.layers;
  s.heads = cfg.heads;
  s.ablation = cfg.ablation;
  s.self_loop = cfg.dsa_self_loop;
  s.activation = cfg.dsa_activation;
  return s;
}

Model::Model(const ModelSpec& spec, RegionGraph graph, std::uint64_t seed) : spec_(spec), graph_(std::move(graph)) {
  if (graph_.size() != spec_.n_regions) {
    throw ConfigError("model expects " + std::to_string(spec_.n_regions) + " regions but the graph has " +
                      std::to_string(graph_.size()));
  }
  if (spec_.n_categories == 0 || spec_.t_window == 0 || spec_.layers == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (spec_.heads == 0 || spec_.d % spec_.heads != 0) {
    throw ConfigError("hidden size d=" + std::to_string(spec_.d) + " is not divisible by heads=" +
                      std::to_string(spec_.heads));
  }
  const std::size_t d = spec_.d, C = spec_.n_categories, H = spec_.heads;
  std::mt19937_64 rng(seed);
  auto add = [&](const std::string& name, Shape shape, double bound) {
    std::vector<double> values(sts::numel(shape));
    for (double& v : values) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
    Tensor t = Tensor::from(std::move(shape), std::move(values), true);
    params_.push_back({name, t});
    return t;
  };

  auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  const double square = fan_in(d);
  const double gate = fan_in(2 * d);

  embedding_ = add("embedding", {C, d}, square);
  const bool msa = spec_.ablation != Ablation::kNoMsa;
  const bool trr = spec_.ablation != Ablation::kNoTrr;
  const bool dsa = spec_.ablation != Ablation::kNoDsa;
  for (std::size_t l = 0; l < spec_.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    stc::StcLayerParams lp;
    if (msa) {
      lp.msa.query = add(prefix + "msa.query", {H, d / H, d}, square);
      lp.msa.key = add(prefix + "msa.key", {H, d / H, d}, square);
      lp.msa.value = add(prefix + "msa.value", {H, d / H, d}, square);
      lp.msa.out = add(prefix + "msa.out", {d, d}, square);
    }
    if (trr) {
      lp.trr.reset = add(prefix + "trr.reset", {d, 2 * d}, gate);
      lp.trr.update = add(prefix + "trr.update", {d, 2 * d}, gate);
      lp.trr.candidate = add(prefix + "trr.candidate", {d, 2 * d}, gate);
      lp.trr.output = add(prefix + "trr.output", {d, d}, square);
    }
    if (dsa) {
      lp.gat.weight = add(prefix + "gat.weight", {d, d}, square);
      lp.gat.attention = add(prefix + "gat.attention", {2 * d}, gate);
      lp.nta.query = add(prefix + "nta.query", {H, d / H, d}, square);
      lp.nta.key = add(prefix + "nta.key", {H, d / H, d}, square);
      lp.nta.value = add(prefix + "nta.value", {H, d / H, d}, square);
      lp.nta.out = add(prefix + "nta.out", {d, d}, square);
    }
    layers_.push_back(std::move(lp));
  }
  if (spec_.ablation == Ablation::kNoMtp) {
    head_.count = add("head.regression", {C, d}, square);
  } else {
    head_.exposure = add("head.exposure", {C, d}, square);
    head_.count = add("head.count", {C, d}, square);
  }
  pe_ = positional_encode(spec_.t_window, d);
}

std::vector<Tensor> Model::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  throw ArgumentError("model has no parameter `" + name + "`");
}

ForwardResult Model::forward(const Tensor& window, const LossConfig& loss, stc::AttentionTrace* trace,
                             const std::vector<std::uint8_t>* mask_override) const {
  const std::size_t N = spec_.n_regions, T = spec_.t_window, C = spec_.n_categories;
  if (window.shape() != Shape{N, T, C}) {
    throw DimensionError("model input must be " + to_string(Shape{N, T, C}) + ", got " + to_string(window.shape()));
  }
  stc::Options opt;
  opt.heads = spec_.heads;
  opt.self_loop = spec_.self_loop;
  opt.activation = spec_.activation;

  ForwardResult res;
  const Tensor e0 = category_embed(window, embedding_);
  res.layers = stc::stc_stack(e0, graph_, pe_, layers_, opt, trace);
  res.fused = fuse_embeddings(res.layers);

  const std::size_t cells = N * C;
  if (spec_.ablation == Ablation::kNoMtp) {
    res.pred.z.assign(cells, 1);
    res.pred.x_hat = category_dot(res.fused, head_.count);
    return res;
  }
  res.pred.p = exposure_head(res.fused, head_);
  if (mask_override) {
    if (mask_override->size() != cells) throw DimensionError("mask override has the wrong size");
    res.pred.z = *mask_override;
  } else {
    res.pred.z = threshold_mask(res.pred.p, loss.tau);
  }
  res.pred.x_hat = count_head(res.fused, res.pred.z, head_);
  return res;
}

WindowLoss Model::loss(const ForwardResult& fwd, const Tensor& target, std::span<const double> truth,
                       const LossConfig& cfg) const {
  const Shape want{spec_.n_regions, spec_.n_categories};
  if (target.shape() != want || truth.size() != sts::numel(want)) {
    throw DimensionError("loss target must be " + to_string(want));
  }
  WindowLoss out;
  if (spec_.ablation == Ablation::kNoMtp) {
    out.regression = ops::sum_all(ops::square(ops::sub(target, fwd.pred.x_hat)));
    out.total = out.regression;
    return out;
  }
  std::vector<std::size_t> buckets(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) buckets[i] = bucket_of(truth[i]);
  out.regression = regression_loss(target, fwd.pred.x_hat, buckets, cfg.eta);
  out.classification = classification_loss(truth, fwd.pred.p);
  out.total = total_loss(out.regression, out.classification, Tensor(), cfg);
  return out;
}

}  // namespace sts
