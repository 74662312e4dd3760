// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "secloc/features.hpp"
#include "secloc/geometry.hpp"

namespace secloc {

enum class KnnMetric { Euclidean, Manhattan, Minkowski };
enum class KnnWeighting { Uniform, InverseDistance };

struct KnnConfig {
  int k = 5;
  KnnMetric metric = KnnMetric::Euclidean;
  double minkowski_p = 3.0;
  KnnWeighting weighting = KnnWeighting::Uniform;

  void validate() const;
  std::string label() const;
  friend bool operator==(const KnnConfig&, const KnnConfig&) = default;
};

inline constexpr double kInverseDistanceEps = 1e-9;

/// Reference fingerprints with z-score scaling fitted on the stored entries.
class FingerprintDb {
 public:
  FingerprintDb() = default;
  /// Fits the scaling on `features`. Throws DimensionMismatch on ragged input.
  FingerprintDb(std::vector<FingerprintVector> features, std::vector<Point2D> positions);

  std::size_t size() const noexcept { return positions_.size(); }
  std::size_t dimension() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }
  const std::vector<Point2D>& positions() const noexcept { return positions_; }
  const std::vector<FingerprintVector>& raw_features() const noexcept { return raw_; }

  std::vector<double> standardize(const FingerprintVector& v) const;

  void save(const std::filesystem::path& path) const;
  static FingerprintDb load(const std::filesystem::path& path);

 private:
  std::vector<FingerprintVector> raw_;
  std::vector<std::vector<double>> scaled_;
  std::vector<Point2D> positions_;
  std::vector<double> mean_;
  std::vector<double> std_;

  friend Point2D knn_predict(const FingerprintDb&, const FingerprintVector&, const KnnConfig&);
  friend std::vector<std::pair<std::size_t, double>> knn_neighbors(const FingerprintDb&, const FingerprintVector&,
                                                                   const KnnConfig&);
};

double knn_distance(std::span<const double> a, std::span<const double> b, const KnnConfig& cfg);

/// The k nearest entries as (index, distance); ties at equal distance keep insertion order.
std::vector<std::pair<std::size_t, double>> knn_neighbors(const FingerprintDb& db, const FingerprintVector& query,
                                                          const KnnConfig& cfg);

/// Weighted mean of the k nearest positions; inverse-distance weights are 1/(d + 1e-9).
Point2D knn_predict(const FingerprintDb& db, const FingerprintVector& query, const KnnConfig& cfg);

/// k in {1,3,5,7,9} x {euclidean, manhattan, minkowski(3)} x {uniform, inverse distance}.
std::vector<KnnConfig> default_knn_grid();

struct GridSearchResult {
  KnnConfig best;
  std::vector<std::pair<KnnConfig, double>> table;  // grid order, validation mean error in meters
};

/// Picks the config with the lowest validation mean error; the earliest grid entry wins ties.
GridSearchResult grid_search(const FingerprintDb& train_db, const std::vector<FingerprintVector>& val_features,
                             const std::vector<Point2D>& val_truth, const std::vector<KnnConfig>& grid);

}  // namespace secloc
