#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sts/features.hpp"
#include "sts/multitask.hpp"
#include "sts/region_graph.hpp"
#include "sts/stc.hpp"

namespace sts {

enum class Ablation { kNone, kNoMsa, kNoTrr, kNoDsa, kNoMtp };
enum class MaskMode { kPredicted, kTeacher };

Ablation parse_ablation(const std::string& text);
std::string to_string(Ablation a);
MaskMode parse_mask_mode(const std::string& text);
std::string to_string(MaskMode m);

struct TrainConfig {
  std::size_t t_window = 30;
  std::size_t d = 16;
  std::size_t layers = 3;
  std::size_t heads = 8;
  double lr0 = 0.001;
  double decay = 0.96;  // per epoch
  std::size_t epochs = 50;
  std::size_t batch_size = 0;  // 0 = whole training split per step (`full` in config files)
  std::size_t split_train = 7;
  std::size_t split_test = 1;
  std::size_t val_slots = 30;
  std::uint64_t seed = 42;
  LossConfig loss;
  NormKind norm = NormKind::kZScore;
  bool dsa_self_loop = true;
  stc::Activation dsa_activation = stc::Activation::kSigmoid;
  MaskMode mask_mode = MaskMode::kPredicted;
  Ablation ablation = Ablation::kNone;
  double grad_clip = 0.0;  // max global L2 norm, 0 = off

  void validate() const;
};

struct SynthConfig {
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  std::size_t n_categories = 2;
  std::size_t n_slots = 400;
  std::vector<double> base_rate{1.0};       // one value, or one per category
  double autoregression = 0.2;              // own previous slot
  double spatial_diffusion = 0.05;          // per neighbour, previous slot
  std::vector<double> semantic_coupling{0.05};  // off-diagonal scalar, or C*C row-major
  double region_heterogeneity = 1.0;        // log-sd of per-region exposure propensity
  double target_zero_ratio = 0.727;
  std::uint64_t seed = 7;

  double base(std::size_t c) const { return base_rate.size() == 1 ? base_rate[0] : base_rate[c]; }
  double coupling(std::size_t to, std::size_t from) const;
  void validate() const;
};

/// How event logs map onto the tensor and which grid rule applies.
struct DataConfig {
  std::vector<std::string> categories;  // empty: c0..c{C-1}
  std::string start_time = "2014-01-01T00:00:00";
  std::int64_t slot_seconds = 86400;
  GridNeighborhood grid_neighborhood = GridNeighborhood::kEdge;

  std::vector<std::string> category_names(std::size_t n_categories) const;
};

struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  DataConfig data;

  /// Flat `key = value` text; '#' starts a comment. Unknown keys and bad
  /// values raise ConfigError naming the line.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Every key in a fixed order; parse(format()) reproduces the config exactly.
  std::string format() const;
  void validate() const;
};

/// Documentation for --help.
std::string config_reference();

/// Deterministic sub-seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose);

}  // namespace sts
