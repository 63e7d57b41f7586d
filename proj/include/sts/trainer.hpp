#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sts/config.hpp"
#include "sts/data_io.hpp"
#include "sts/features.hpp"
#include "sts/model.hpp"
#include "sts/tensor.hpp"

namespace sts {

enum class Split { kTrain, kValidation, kTest };

std::string to_string(Split s);

struct Window {
  std::size_t target_slot = 0;  // inputs are slots [target_slot - T, target_slot)
  Split split = Split::kTrain;
  Tensor input;                 // N x T x C, normalised
  Tensor target;                // N x C, normalised
  std::vector<double> truth;    // N x C, raw
};

struct WindowedDataset {
  std::size_t n_regions = 0;
  std::size_t n_categories = 0;
  std::size_t t_window = 0;
  std::size_t fit_slots = 0;  // normalisation was fitted on slots [0, fit_slots)
  NormStats stats;
  std::vector<Window> windows;  // chronological

  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const { return indices(s).size(); }
};

/// Split sizes for `n_windows` chronologically ordered windows.
struct SplitPlan {
  std::size_t train = 0, validation = 0, test = 0;
};
SplitPlan plan_split(std::size_t n_windows, const TrainConfig& cfg);

/// One window per target slot t in [T, T_total). The last share of windows by
/// the train:test ratio is the test split; the last val_slots training windows
/// are validation. Normalisation is fitted on slots before the first test target.
WindowedDataset make_windows(const AnomalyTensor& x, const TrainConfig& cfg);
/// Same windows, normalised with given statistics (evaluating a checkpoint).
WindowedDataset make_windows(const AnomalyTensor& x, const TrainConfig& cfg, const NormStats& stats);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update applied in place to leaf parameters.
void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr);

/// lr0 * decay^epoch
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean per-window objective over the epoch's steps
  std::optional<double> val_mae;
  std::optional<double> val_rmse;
  std::size_t clipped_steps = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_loss = 0.0;  // objective at initialisation, before any step
  std::size_t best_epoch = 0;
  std::optional<double> best_val_mae;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Leaves the model at the epoch with the best validation MAE (the last epoch
/// when there is no validation split). Throws NumericError naming the epoch and
/// step when the loss stops being finite.
TrainResult train(Model& model, const WindowedDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean per-window training objective (with weight penalty) at the current parameters.
double training_objective(const Model& model, const WindowedDataset& data, const TrainConfig& cfg);

/// Denormalised, zero-clamped N x C prediction for one window.
std::vector<double> predict(const Model& model, const Window& w, const NormStats& stats, const LossConfig& loss);

MetricsReport evaluate(const Model& model, const WindowedDataset& data, Split split, const LossConfig& loss);
/// Metrics of the all-zero predictor on a split.
MetricsReport evaluate_zero_baseline(const WindowedDataset& data, Split split);

void write_epoch_log(std::ostream& out, const std::vector<EpochLog>& log);

struct GradcheckGroup {
  std::string name;
  std::size_t size = 0;
  double max_error = 0.0;
};

/// Central differences against backprop for every parameter group on one
/// window's objective (weight penalty included). The exposure mask is taken at
/// the unperturbed point and held fixed.
std::vector<GradcheckGroup> gradcheck_model(const Model& model, const Window& w, const TrainConfig& cfg,
                                            double h = 1e-5);

}  // namespace sts
