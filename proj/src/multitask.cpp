#include "sts/multitask.hpp"

#include <cmath>

#include "sts/errors.hpp"
#include "sts/ops.hpp"

namespace sts {

void LossConfig::validate() const {
  for (double w : eta)
    if (!(w >= 0.0)) throw ConfigError("bucket weights must be non-negative");
  if (!(lambda_c >= 0.0) || !(lambda_reg >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("exposure threshold tau must lie in (0, 1)");
}

Tensor fuse_embeddings(const std::vector<Tensor>& layers) {
  if (layers.empty()) throw ContractError("fuse_embeddings: no layer outputs");
  Tensor total = layers.front();
  for (std::size_t l = 1; l < layers.size(); ++l) total = ops::add(total, layers[l]);
  const Tensor averaged = ops::scale(total, 1.0 / static_cast<double>(layers.size()));
  return ops::sum(averaged, 1);
}

Tensor category_dot(const Tensor& e, const Tensor& w) {
  if (e.rank() != 3 || w.rank() != 2 || e.extent(1) != w.extent(0) || e.extent(2) != w.extent(1)) {
    throw DimensionError("category_dot: features " + to_string(e.shape()) + " vs weights " + to_string(w.shape()));
  }
  const std::size_t N = e.extent(0), C = e.extent(1), d = e.extent(2);
  // [C, N, d] x [C, d, 1] -> [C, N, 1]
  const Tensor per_cat = ops::permute(e, {1, 0, 2});
  const Tensor dots = ops::bmm(per_cat, ops::reshape(w, {C, d, 1}));
  return ops::permute(ops::reshape(dots, {C, N}), {1, 0});
}

Tensor exposure_head(const Tensor& e, const HeadParams& hp) {
  if (!hp.exposure.defined()) throw ContractError("exposure_head: model has no exposure head");
  return ops::sigmoid(category_dot(e, hp.exposure));
}

std::vector<std::uint8_t> threshold_mask(const Tensor& p, double tau) {
  std::vector<std::uint8_t> z(p.numel());
  const auto v = p.data();
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = v[i] >= tau ? 1 : 0;
  return z;
}

Tensor count_head(const Tensor& e, std::span<const std::uint8_t> z, const HeadParams& hp) {
  return ops::mask(category_dot(e, hp.count), z);
}

std::size_t bucket_of(double truth) {
  if (truth < 1.0) return 0;
  if (truth < 2.0) return 1;
  if (truth < 3.0) return 2;
  return 3;
}

Tensor classification_loss(std::span<const double> truth, const Tensor& p) {
  if (truth.size() != p.numel()) throw DimensionError("classification_loss: truth and probabilities differ in size");
  std::vector<double> positive(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) positive[i] = truth[i] > 0.0 ? 1.0 : 0.0;
  const Tensor pos = Tensor::from(p.shape(), positive);
  const Tensor neg = Tensor::from(p.shape(), [&] {
    for (double& v : positive) v = 1.0 - v;
    return positive;
  }());
  constexpr double kFloor = 1e-12;
  const Tensor log_p = ops::log(ops::clamp(p, kFloor, 1.0));
  const Tensor log_q = ops::log(ops::clamp(ops::add_scalar(ops::scale(p, -1.0), 1.0), kFloor, 1.0));
  return ops::scale(ops::sum_all(ops::add(ops::mul(pos, log_p), ops::mul(neg, log_q))), -1.0);
}

Tensor regression_loss(const Tensor& target, const Tensor& x_hat, std::span<const std::size_t> buckets,
                       const BucketWeights& eta) {
  if (target.shape() != x_hat.shape() || buckets.size() != x_hat.numel()) {
    throw DimensionError("regression_loss: target " + to_string(target.shape()) + " vs prediction " +
                         to_string(x_hat.shape()));
  }
  std::vector<double> weights(buckets.size());
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (buckets[i] >= eta.size()) throw ArgumentError("regression_loss: bucket out of range");
    weights[i] = eta[buckets[i]];
  }
  const Tensor w = Tensor::from(x_hat.shape(), std::move(weights));
  return ops::sum_all(ops::mul(w, ops::square(ops::sub(target, x_hat))));
}

Tensor regression_loss(std::span<const double> truth, const Tensor& x_hat, const BucketWeights& eta) {
  std::vector<std::size_t> buckets(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) buckets[i] = bucket_of(truth[i]);
  if (truth.size() != x_hat.numel()) throw DimensionError("regression_loss: truth and prediction differ in size");
  const Tensor target = Tensor::from(x_hat.shape(), std::vector<double>(truth.begin(), truth.end()));
  return regression_loss(target, x_hat, buckets, eta);
}

Tensor l2_penalty(const std::vector<Tensor>& params) {
  Tensor total = Tensor::scalar(0.0);
  for (const auto& p : params) total = ops::add(total, ops::sum_all(ops::square(p)));
  return total;
}

Tensor total_loss(const Tensor& l_r, const Tensor& l_c, const Tensor& penalty, const LossConfig& cfg) {
  Tensor loss = l_r;
  if (l_c.defined() && cfg.lambda_c != 0.0) loss = ops::add(loss, ops::scale(l_c, cfg.lambda_c));
  if (penalty.defined() && cfg.lambda_reg != 0.0) loss = ops::add(loss, ops::scale(penalty, cfg.lambda_reg));
  return loss;
}

}  // namespace sts
