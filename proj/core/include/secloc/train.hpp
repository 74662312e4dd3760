// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "secloc/dataset.hpp"
#include "secloc/model.hpp"

namespace secloc {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double lr_final_frac = 0.05;  // cosine decay from lr to lr * lr_final_frac
  double val_fraction = 0.2;    // share of trajectories held out
  std::size_t patience = 0;     // epochs without validation improvement before stopping; 0 disables
  std::uint64_t rng_seed = 7;
  std::size_t oversample_nlos = 2;  // copies of each NLOS record per epoch
  std::size_t threads = 1;
  double weight_decay = 0.0;
  double anchor_dropout = 0.0;  // chance that a training sample loses one random anchor

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;   // mean Huber loss over the epoch's updates
  double train_error = 0.0;  // mean Euclidean error seen during the epoch
  double val_error = 0.0;
  bool checkpoint = false;
  double checkpoint_train_loss = 0.0;  // Huber loss on the full training split, set on checkpoints
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_error = 0.0;
  std::vector<int> train_trajectories;
  std::vector<int> val_trajectories;
  std::size_t skipped_records = 0;  // records whose features could not be built
};

nlohmann::json to_json(const TrainLog& log);
TrainLog train_log_from_json(const nlohmann::json& j);

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<int> train_trajectories;
  std::vector<int> val_trajectories;
};

/// Holds out whole trajectories. Throws ConfigError when either side would be empty.
DataSplit split_by_trajectory(const std::vector<CirRecord>& records, double val_fraction, std::uint64_t seed);

/// Everything needed to run inference later.
struct TrainedModel {
  ArchConfig arch;
  NormalizationSpec norm;
  nn::ParamStore params;
  TrainLog log;
};

/// Default normalization for a dataset: map bounds from the anchors' bounding box with a margin.
NormalizationSpec default_normalization(const Rect& bounds, const Dataset& dataset);

TrainedModel train_model(const Dataset& dataset, const ArchConfig& arch, const NormalizationSpec& norm,
                         const TrainConfig& cfg);

struct Prediction {
  bool ok = false;
  std::string error;
  Point2D pred;
  std::vector<double> attention;  // [heads x n_anchors]
  double latency_s = 0.0;
};

/// Runs inference record by record. A record whose features fail is marked and skipped.
std::vector<Prediction> predict_batch(std::span<const CirRecord> records, const AnchorSet& anchors,
                                      const TrainedModel& model);

/// Head-averaged attention per anchor.
std::vector<double> mean_attention(std::span<const double> attention, std::size_t n_anchors);

inline constexpr const char* kModelSchema = "secloc.model/1";

/// Directory with manifest.json, params.bin, arch.json, norm.json and train_log.json.
void save_model(const std::filesystem::path& dir, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace secloc
