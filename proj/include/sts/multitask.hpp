#pragma once

// Zero-inflated prediction head: layer fusion, an exposure classifier that
// gates a count regressor, and the bucket-weighted multi-task loss.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sts/tensor.hpp"

namespace sts {

/// Bucket weights for ground-truth indices {0, 1, 2, >=3}.
using BucketWeights = std::array<double, 4>;

struct LossConfig {
  BucketWeights eta{0.05, 0.2, 0.25, 0.5};
  double lambda_c = 0.01;
  double lambda_reg = 0.0;
  double tau = 0.5;

  void validate() const;
};

/// Distinct per-category vectors for the two tasks, each C x d. The -MTP
/// variant leaves `exposure` undefined and uses `count` as a plain regressor.
struct HeadParams {
  Tensor exposure;
  Tensor count;
};

struct PredictionOutput {
  Tensor p;                        // N x C probabilities (undefined for -MTP)
  std::vector<std::uint8_t> z;     // N x C mask
  Tensor x_hat;                    // N x C, normalised scale
};

/// Averages the L+1 layer outputs and sums the result over time: N x C x d.
Tensor fuse_embeddings(const std::vector<Tensor>& layers);

/// out[n, c] = w[c, :] . e[n, c, :]
Tensor category_dot(const Tensor& e, const Tensor& w);

Tensor exposure_head(const Tensor& e, const HeadParams& hp);

/// z = 1 iff p >= tau. The mask is a constant for differentiation.
std::vector<std::uint8_t> threshold_mask(const Tensor& p, double tau);

/// Per-category regression, exactly +0 wherever z = 0.
Tensor count_head(const Tensor& e, std::span<const std::uint8_t> z, const HeadParams& hp);

/// Index into BucketWeights for a ground-truth (denormalised) value.
std::size_t bucket_of(double truth);

/// Binary cross-entropy summed over all cells, positives being truth > 0.
Tensor classification_loss(std::span<const double> truth, const Tensor& p);

/// sum_f eta_f * sum_{cells in bucket f} (target - x_hat)^2
Tensor regression_loss(const Tensor& target, const Tensor& x_hat, std::span<const std::size_t> buckets,
                       const BucketWeights& eta);
/// Convenience form where the truth supplies both the bucket and the residual target.
Tensor regression_loss(std::span<const double> truth, const Tensor& x_hat, const BucketWeights& eta);

/// Sum of squared entries over every tensor.
Tensor l2_penalty(const std::vector<Tensor>& params);

/// L_r + lambda_c * L_c + lambda_reg * penalty. Undefined terms count as zero.
Tensor total_loss(const Tensor& l_r, const Tensor& l_c, const Tensor& penalty, const LossConfig& cfg);

}  // namespace sts
