#include <cmath>
#include <cstdio>

#include "sts/data_io.hpp"
#include "sts/errors.hpp"

namespace sts {

namespace {

std::string fixed4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fixed4(const std::optional<double>& v) { return v ? fixed4(*v) : std::string("NA"); }

}  // namespace

void MetricsAccumulator::add(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw DimensionError("metrics: truth has " + std::to_string(truth.size()) + " values, prediction " +
                         std::to_string(pred.size()));
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double err = truth[i] - pred[i];
    abs_ += std::fabs(err);
    sq_ += err * err;
    if (truth[i] != 0.0) {
      ++n_nonzero_;
      abs_star_ += std::fabs(err);
      sq_star_ += err * err;
    }
  }
  n_ += truth.size();
}

MetricsReport MetricsAccumulator::report() const {
  if (n_ == 0) throw ContractError("metrics: empty sample set");
  MetricsReport r;
  const double n = static_cast<double>(n_);
  r.mae = abs_ / n;
  r.rmse = std::sqrt(sq_ / n);
  if (n_nonzero_ > 0) {
    const double k = static_cast<double>(n_nonzero_);
    r.mae_star = abs_star_ / k;
    r.rmse_star = std::sqrt(sq_star_ / k);
  }
  r.n_samples = n_;
  r.n_nonzero = n_nonzero_;
  r.zero_ratio = static_cast<double>(n_ - n_nonzero_) / n;
  return r;
}

MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> pred) {
  MetricsAccumulator acc;
  acc.add(truth, pred);
  return acc.report();
}

std::string MetricsReport::to_text() const {
  std::string out;
  out += "mae=" + fixed4(mae) + "\n";
  out += "rmse=" + fixed4(rmse) + "\n";
  out += "mae_star=" + fixed4(mae_star) + "\n";
  out += "rmse_star=" + fixed4(rmse_star) + "\n";
  out += "zero_ratio=" + fixed4(zero_ratio) + "\n";
  out += "n_samples=" + std::to_string(n_samples) + "\n";
  out += "n_nonzero=" + std::to_string(n_nonzero) + "\n";
  return out;
}

std::string MetricsReport::csv_header() { return "mae,rmse,mae_star,rmse_star,zero_ratio,n_samples,n_nonzero"; }

std::string MetricsReport::csv_row() const {
  return fixed4(mae) + "," + fixed4(rmse) + "," + fixed4(mae_star) + "," + fixed4(rmse_star) + "," +
         fixed4(zero_ratio) + "," + std::to_string(n_samples) + "," + std::to_string(n_nonzero);
}

}  // namespace sts
