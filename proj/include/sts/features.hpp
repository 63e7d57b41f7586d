#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sts/tensor.hpp"

namespace sts {

/// Urban anomaly indices X with shape N x T x C (row-major, category fastest).
struct AnomalyTensor {
  std::size_t n_regions = 0;
  std::size_t n_slots = 0;
  std::size_t n_categories = 0;
  std::vector<double> values;
  std::int64_t slot_seconds = 86400;
  std::int64_t t0 = 0;  // unix seconds of slot 0
  std::vector<std::string> category_names;

  static AnomalyTensor zeros(std::size_t n, std::size_t t, std::size_t c);

  std::size_t index(std::size_t r, std::size_t t, std::size_t c) const {
    return (r * n_slots + t) * n_categories + c;
  }
  double& at(std::size_t r, std::size_t t, std::size_t c) { return values[index(r, t, c)]; }
  double at(std::size_t r, std::size_t t, std::size_t c) const { return values[index(r, t, c)]; }

  /// Throws DataError on negative/non-finite values or inconsistent extents.
  void validate() const;
  double zero_ratio() const;
};

enum class NormKind { kZScore, kMinMax };

NormKind parse_norm_kind(const std::string& text);
std::string to_string(NormKind kind);

/// Per-category scaling. Degenerate categories get a unit denominator.
struct NormStats {
  NormKind kind = NormKind::kZScore;
  std::vector<double> mu;
  std::vector<double> sigma;  // population standard deviation
  std::vector<double> min;
  std::vector<double> max;

  std::size_t categories() const { return mu.size(); }
  double offset(std::size_t c) const { return kind == NormKind::kZScore ? mu[c] : min[c]; }
  double denominator(std::size_t c) const;

  bool operator==(const NormStats&) const = default;
};

/// Fits on slots [0, fit_slots) over all regions.
NormStats fit_norm(const AnomalyTensor& x, NormKind kind, std::size_t fit_slots);

/// Applies stats to any flattened buffer whose last axis is the category axis.
std::vector<double> apply_norm(std::span<const double> values, const NormStats& stats);

struct Normalized {
  std::vector<double> values;  // N x T x C
  NormStats stats;
};

/// Fits on every slot and applies.
Normalized normalize(const AnomalyTensor& x, NormKind kind);

/// Inverse of apply_norm. With clamp_at_zero the result is floored at 0, which
/// is how predictions enter the metrics.
std::vector<double> denormalize(std::span<const double> values, const NormStats& stats, bool clamp_at_zero = false);

/// E[..., c, :] = xbar[..., c] * table[c, :]. xbar has the category axis last,
/// table is C x d; gradients flow into the table.
Tensor category_embed(const Tensor& xbar, const Tensor& table);

/// Sinusoidal encoding, T x d, d even.
Tensor positional_encode(std::size_t t_len, std::size_t d);

}  // namespace sts
