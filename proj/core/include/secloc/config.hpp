// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "secloc/attacks.hpp"
#include "secloc/channel.hpp"
#include "secloc/model.hpp"
#include "secloc/train.hpp"

namespace secloc {

struct TrajectorySpec {
  std::vector<Point2D> waypoints;
  double step = 0.5;  // meters between records
};

/// Either a list of trajectories to synthesize or an existing dataset file.
struct DatasetSpec {
  std::vector<TrajectorySpec> trajectories;
  std::optional<std::filesystem::path> path;
  int traj_offset = 0;  // trajectory ids start here, keeping train and test RNG streams apart
};

/// Experiment description read from one JSON file. Every seed is derived from `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  EnvironmentMap env;
  ChannelConfig channel;
  DatasetSpec train_data;
  DatasetSpec test_data;
  ArchConfig arch;
  TrainConfig train;
  std::vector<std::string> methods = {"sec5gloc", "knn", "tdoa"};
  std::vector<AttackSpec> attacks;
  std::vector<std::string> attack_compare = {"non_attention"};
  std::vector<std::string> ablation_variants = kVariantNames;
  std::size_t bench_records = 200;
  double heatmap_bin = 1.0;

  /// Re-derives the channel, training and attack seeds after `seed` changes.
  void apply_seed(std::uint64_t new_seed);

  std::filesystem::path train_path() const;
  std::filesystem::path test_path() const;
  std::filesystem::path model_dir() const { return output_dir / "model"; }
  std::filesystem::path variant_dir(const std::string& v) const { return output_dir / "variants" / v; }
};

/// Parses and validates. Relative paths resolve against `base_dir`. Errors name the key path.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Synthesizes every trajectory of a dataset spec.
Dataset synthesize(const ExperimentConfig& cfg, const DatasetSpec& spec);

}  // namespace secloc
