#include "sts/features.hpp"

#include <algorithm>
#include <cmath>

#include "sts/errors.hpp"
#include "sts/ops.hpp"

namespace sts {

AnomalyTensor AnomalyTensor::zeros(std::size_t n, std::size_t t, std::size_t c) {
  AnomalyTensor x;
  x.n_regions = n;
  x.n_slots = t;
  x.n_categories = c;
  x.values.assign(n * t * c, 0.0);
  for (std::size_t k = 0; k < c; ++k) x.category_names.push_back("c" + std::to_string(k));
  return x;
}

void AnomalyTensor::validate() const {
  if (n_regions == 0 || n_slots == 0 || n_categories == 0) throw DataError("anomaly tensor has an empty axis");
  if (values.size() != n_regions * n_slots * n_categories) throw DataError("anomaly tensor size mismatch");
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw DataError("anomaly indices must be finite and non-negative");
  }
}

double AnomalyTensor::zero_ratio() const {
  if (values.empty()) return 0.0;
  const auto zeros = std::count(values.begin(), values.end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(values.size());
}

NormKind parse_norm_kind(const std::string& text) {
  if (text == "zscore") return NormKind::kZScore;
  if (text == "minmax") return NormKind::kMinMax;
  throw ConfigError("unknown normalisation `" + text + "` (expected zscore or minmax)");
}

std::string to_string(NormKind kind) { return kind == NormKind::kZScore ? "zscore" : "minmax"; }

double NormStats::denominator(std::size_t c) const {
  const double span = kind == NormKind::kZScore ? sigma[c] : max[c] - min[c];
  return span > 0.0 ? span : 1.0;
}

NormStats fit_norm(const AnomalyTensor& x, NormKind kind, std::size_t fit_slots) {
  if (fit_slots == 0 || fit_slots > x.n_slots) throw ArgumentError("normalisation needs 1..T fitting slots");
  const std::size_t C = x.n_categories;
  NormStats s;
  s.kind = kind;
  s.mu.assign(C, 0.0);
  s.sigma.assign(C, 0.0);
  s.min.assign(C, 0.0);
  s.max.assign(C, 0.0);
  const double count = static_cast<double>(x.n_regions * fit_slots);
  for (std::size_t c = 0; c < C; ++c) {
    double total = 0.0;
    double lo = x.at(0, 0, c), hi = lo;
    for (std::size_t r = 0; r < x.n_regions; ++r)
      for (std::size_t t = 0; t < fit_slots; ++t) {
        const double v = x.at(r, t, c);
        total += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const double mu = total / count;
    double sq = 0.0;
    for (std::size_t r = 0; r < x.n_regions; ++r)
      for (std::size_t t = 0; t < fit_slots; ++t) sq += (x.at(r, t, c) - mu) * (x.at(r, t, c) - mu);
    s.mu[c] = mu;
    s.sigma[c] = std::sqrt(sq / count);
    s.min[c] = lo;
    s.max[c] = hi;
  }
  return s;
}

namespace {

void check_stats(const NormStats& stats, std::size_t size) {
  const std::size_t C = stats.categories();
  if (C == 0 || stats.sigma.size() != C || stats.min.size() != C || stats.max.size() != C) {
    throw ContractError("normalisation stats are incomplete");
  }
  if (size % C != 0) throw ContractError("buffer is not a whole number of category rows");
}

}  // namespace

std::vector<double> apply_norm(std::span<const double> values, const NormStats& stats) {
  check_stats(stats, values.size());
  const std::size_t C = stats.categories();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = i % C;
    out[i] = (values[i] - stats.offset(c)) / stats.denominator(c);
  }
  return out;
}

Normalized normalize(const AnomalyTensor& x, NormKind kind) {
  Normalized n;
  n.stats = fit_norm(x, kind, x.n_slots);
  n.values = apply_norm(x.values, n.stats);
  return n;
}

std::vector<double> denormalize(std::span<const double> values, const NormStats& stats, bool clamp_at_zero) {
  check_stats(stats, values.size());
  const std::size_t C = stats.categories();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = i % C;
    out[i] = values[i] * stats.denominator(c) + stats.offset(c);
    if (clamp_at_zero && out[i] < 0.0) out[i] = 0.0;
  }
  return out;
}

Tensor category_embed(const Tensor& xbar, const Tensor& table) {
  if (table.rank() != 2 || xbar.rank() < 1 || xbar.shape().back() != table.extent(0)) {
    throw DimensionError("category_embed: indices " + to_string(xbar.shape()) + " vs table " +
                         to_string(table.shape()));
  }
  const std::size_t C = table.extent(0), d = table.extent(1), rows = xbar.numel() / C;
  // [rows, C] -> [C, rows, 1] x [C, 1, d] -> [C, rows, d] -> [rows, C, d]
  Tensor cols = ops::reshape(ops::permute(ops::reshape(xbar, {rows, C}), {1, 0}), {C, rows, 1});
  Tensor scaled = ops::bmm(cols, ops::reshape(table, {C, 1, d}));
  Shape out = xbar.shape();
  out.push_back(d);
  return ops::reshape(ops::permute(scaled, {1, 0, 2}), std::move(out));
}

Tensor positional_encode(std::size_t t_len, std::size_t d) {
  if (t_len == 0 || d == 0 || d % 2 != 0) throw ArgumentError("positional encoding needs T >= 1 and even d");
  std::vector<double> pe(t_len * d);
  for (std::size_t pos = 0; pos < t_len; ++pos)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      pe[pos * d + 2 * i] = std::sin(angle);
      pe[pos * d + 2 * i + 1] = std::cos(angle);
    }
  return Tensor::from({t_len, d}, std::move(pe));
}

}  // namespace sts
