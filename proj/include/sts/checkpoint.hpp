#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sts/config.hpp"
#include "sts/features.hpp"
#include "sts/model.hpp"

namespace sts {

/// Text header followed by little-endian float64 payloads in manifest order:
///
///   sts-checkpoint 1
///   regions <N>
///   categories <name> ...
///   best_epoch <k>
///   best_val_mae <hex float | none>
///   config <line count>
///   <config echo lines>
///   norm <zscore|minmax>
///   tensor <name> <rank> <extents...>     (one per entry)
///   end
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  RunConfig config;
  std::size_t n_regions = 0;
  std::vector<std::string> categories;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_mae;
  NormStats stats;
  std::vector<NamedParam> params;  // detached copies

  static Checkpoint capture(const Model& model, const RunConfig& config, const NormStats& stats,
                            const std::vector<std::string>& categories, std::size_t best_epoch,
                            std::optional<double> best_val_mae);

  /// Builds a model over `graph` and loads the stored parameters into it.
  Model restore(const RegionGraph& graph) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace sts
