#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sts/config.hpp"
#include "sts/features.hpp"
#include "sts/region_graph.hpp"

namespace sts {

// ---- metrics ---------------------------------------------------------------

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> mae_star;   // absent when no truth is non-zero
  std::optional<double> rmse_star;
  std::size_t n_samples = 0;
  std::size_t n_nonzero = 0;
  double zero_ratio = 0.0;

  /// `name=value` lines, metrics at 4 decimals.
  std::string to_text() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Streams (truth, prediction) pairs; sums are taken in insertion order.
class MetricsAccumulator {
 public:
  void add(std::span<const double> truth, std::span<const double> pred);
  MetricsReport report() const;  // ContractError when empty

 private:
  std::size_t n_ = 0, n_nonzero_ = 0;
  double abs_ = 0.0, sq_ = 0.0, abs_star_ = 0.0, sq_star_ = 0.0;
};

MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> pred);

// ---- time ------------------------------------------------------------------

/// Seconds since the Unix epoch, split so slot arithmetic stays exact.
struct Timestamp {
  std::int64_t seconds = 0;
  double fraction = 0.0;  // [0, 1)
};

/// `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]` (space also
/// accepted as the separator). No offset means UTC. Throws DataError.
Timestamp parse_timestamp(const std::string& text);
/// `YYYY-MM-DDTHH:MM:SSZ`
std::string format_timestamp(std::int64_t seconds);

// ---- synthetic data --------------------------------------------------------

struct GenerateResult {
  AnomalyTensor data;
  double gate_scale = 0.0;
  double achieved_zero_ratio = 0.0;
  std::optional<std::string> warning;  // set when the target ratio is out of reach
};

/// Gated Poisson autoregression on `g`. Each region has a lognormal exposure
/// propensity; the gate opens with probability min(1, s * propensity) and s is
/// calibrated so the zero ratio hits the target. Given an open gate the count
/// is Poisson with rate
///   base[c] + ar * x[r,t-1,c] + diffusion * sum_{j~r} x[j,t-1,c]
///           + sum_{c' != c} coupling[c][c'] * x[r,t-1,c'].
GenerateResult generate(const SynthConfig& cfg, const RegionGraph& g, const DataConfig& data = {});

// ---- event logs ------------------------------------------------------------

struct IngestOptions {
  std::vector<std::string> categories;
  std::int64_t t0 = 0;
  std::int64_t slot_seconds = 86400;
  std::size_t n_slots = 0;
  double max_error_fraction = 0.01;
};

struct IngestResult {
  AnomalyTensor data;
  std::size_t records = 0;
  std::size_t dropped_out_of_range = 0;
  std::vector<std::string> errors;  // "line K: ..."
};

/// Reads `timestamp,region_id,category,value` CSV. Slot t covers the half-open
/// interval [t0 + t*slot, t0 + (t+1)*slot), so boundary events go to the later
/// slot. Bad records are reported; more than max_error_fraction of them aborts
/// with DataError.
IngestResult ingest_events(std::istream& in, const RegionGraph& g, const IngestOptions& opt);

/// One row per unit of integral counts (any fractional remainder becomes one
/// extra row), stamped at the slot start.
void export_events(std::ostream& out, const AnomalyTensor& x);

/// Number of rows export_events would write.
std::size_t count_events(const AnomalyTensor& x);

// ---- sparsity --------------------------------------------------------------

struct RebinResult {
  AnomalyTensor data;
  std::size_t dropped_slots = 0;  // trailing partial run
};

RebinResult rebin(const AnomalyTensor& x, std::size_t factor);

}  // namespace sts
