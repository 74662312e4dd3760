// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "secloc/attacks.hpp"
#include "secloc/knn.hpp"
#include "secloc/tdoa_solver.hpp"
#include "secloc/train.hpp"

namespace secloc {

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
  std::size_t n = 0;
};

/// Nearest-rank percentile of an ascending list: element ceil(q * n) - 1.
double nearest_rank(std::span<const double> sorted, double q);
ErrorStats stats_from_errors(std::vector<double> errors);
/// Euclidean errors of paired predictions. Throws LengthMismatch; an empty pair yields n = 0.
ErrorStats error_stats(std::span<const Point2D> preds, std::span<const Point2D> truths);

nlohmann::json to_json(const ErrorStats& s);

/// k-NN baseline: grid-searched on the validation trajectories, then rebuilt over all training records.
struct KnnBaseline {
  FingerprintDb db;
  KnnConfig cfg;
  GridSearchResult search;
};

KnnBaseline build_knn_baseline(const Dataset& train, double val_fraction, std::uint64_t seed,
                               const std::vector<KnnConfig>& grid = default_knn_grid());

/// Per-record outcome of one localization method.
struct MethodEval {
  std::string name;
  std::vector<std::optional<Point2D>> preds;  // nullopt where the method failed
  std::vector<std::vector<double>> attention;  // [heads x n] rows; empty for baselines
  ErrorStats mixed, los, nlos;
  std::size_t failed = 0;

  std::vector<double> errors(std::span<const Point2D> truths) const;  // successful records, in order
};

/// Records under evaluation with their LOS/NLOS tags.
struct EvalSet {
  std::vector<CirRecord> records;
  AnchorSet anchors;
  Rect bounds;
};

MethodEval eval_model(const EvalSet& set, const TrainedModel& model, const std::string& name);
MethodEval eval_knn(const EvalSet& set, const KnnBaseline& knn);
MethodEval eval_tdoa(const EvalSet& set, const SolverConfig& cfg = {});

struct AttackRecordRow {
  std::optional<int> target;
  bool applied = false;
  bool clamped = false;
  double energy_ratio = 0.0;
  double clean_attention = 0.0;     // head-averaged weight on the target
  double attacked_attention = 0.0;
  double anomaly = 0.0;             // clean - attacked attention on the target
  std::string error;                // why the attack was not applied
};

struct AttackSection {
  AttackSpec spec;
  std::vector<AttackRecordRow> rows;
  std::map<std::string, std::pair<MethodEval, MethodEval>> variants;  // name -> (clean, attacked)
  double mean_clean_attention = 0.0;
  double mean_attacked_attention = 0.0;

  double degradation(const std::string& variant) const;  // attacked mean - clean mean
};

struct AblationRow {
  std::string variant;
  std::size_t parameter_count = 0;
  std::size_t best_epoch = 0;
  MethodEval eval;
};

struct EvalReport {
  std::string scenario;
  std::vector<Point2D> truths;
  std::vector<bool> nlos;
  Rect bounds;
  std::vector<MethodEval> methods;
  std::optional<AttackSection> attack;
  std::vector<AblationRow> ablations;

  const MethodEval& method(const std::string& name) const;
};

inline constexpr const char* kReportSchema = "secloc.eval/1";

/// Sec5GLoc, k-NN and TDoA on the same records. Null inputs skip that method.
EvalReport run_benign(const EvalSet& set, const TrainedModel* model, const KnnBaseline* knn,
                      const SolverConfig* tdoa);

/// Clean pass, per-record target choice on `primary`, perturbation, attacked pass for `primary` and
/// every extra variant on the identical perturbed records.
EvalReport run_attack(const EvalSet& set, const TrainedModel& primary, const AttackSpec& spec,
                      const std::map<std::string, const TrainedModel*>& compare_variants, const AttackEnv& env);

/// Trains every named variant with the same data, normalization, config and seed.
std::map<std::string, TrainedModel> train_variants(const Dataset& train, const std::vector<std::string>& variants,
                                                   const ArchConfig& base, const NormalizationSpec& norm,
                                                   const TrainConfig& cfg);

EvalReport run_ablations(const EvalSet& set, const std::map<std::string, TrainedModel>& models,
                         const std::vector<std::string>& order = kVariantNames);

nlohmann::json to_json(const MethodEval& m);
nlohmann::json to_json(const EvalReport& report);

/// Writes report.json plus CSV and SVG sidecars for every method. Byte-deterministic.
void export_artifacts(const EvalReport& report, const std::filesystem::path& out_dir, double heatmap_bin = 1.0);

}  // namespace secloc
