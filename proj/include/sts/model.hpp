#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sts/config.hpp"
#include "sts/multitask.hpp"
#include "sts/region_graph.hpp"
#include "sts/stc.hpp"
#include "sts/tensor.hpp"

namespace sts {

struct ModelSpec {
  std::size_t n_regions = 0;
  std::size_t n_categories = 0;
  std::size_t t_window = 0;
  std::size_t d = 0;
  std::size_t layers = 0;
  std::size_t heads = 0;
  Ablation ablation = Ablation::kNone;
  bool self_loop = true;
  stc::Activation activation = stc::Activation::kSigmoid;

  static ModelSpec from(const TrainConfig& cfg, std::size_t n_regions, std::size_t n_categories);
};

struct NamedParam {
  std::string name;
  Tensor value;
};

struct ForwardResult {
  std::vector<Tensor> layers;  // E0..EL
  Tensor fused;                // N x C x d
  PredictionOutput pred;
};

/// Everything one training window contributes to the objective.
struct WindowLoss {
  Tensor total;           // L_r + lambda_c * L_c (no weight penalty)
  Tensor regression;
  Tensor classification;  // undefined for -MTP
};

class Model {
 public:
  /// Parameters drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Model(const ModelSpec& spec, RegionGraph graph, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const RegionGraph& graph() const { return graph_; }

  /// Canonical order; used for optimiser state and checkpoints.
  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<Tensor> param_tensors() const;
  const Tensor& param(const std::string& name) const;

  /// `window` is the normalised N x T x C history. The mask is thresholded P
  /// unless `mask_override` supplies one (teacher forcing, gradient checks).
  ForwardResult forward(const Tensor& window, const LossConfig& loss, stc::AttentionTrace* trace = nullptr,
                        const std::vector<std::uint8_t>* mask_override = nullptr) const;

  /// target: normalised N x C; truth: raw N x C values used for buckets and exposure labels.
  WindowLoss loss(const ForwardResult& fwd, const Tensor& target, std::span<const double> truth,
                  const LossConfig& cfg) const;

 private:
  ModelSpec spec_;
  RegionGraph graph_;
  std::vector<NamedParam> params_;
  Tensor embedding_;
  std::vector<stc::StcLayerParams> layers_;
  HeadParams head_;
  Tensor pe_;
};

}  // namespace sts
