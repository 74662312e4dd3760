// SPDX-License-Identifier: Apache-2.0
#include "secloc/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "secloc/errors.hpp"
#include "secloc/nn/param_store.hpp"

namespace secloc {

void KnnConfig::validate() const {
  if (k < 1) throw ConfigError("knn.k must be at least 1");
  if (metric == KnnMetric::Minkowski && !(minkowski_p >= 1.0)) throw ConfigError("knn.minkowski_p must be >= 1");
}

std::string KnnConfig::label() const {
  std::string m = metric == KnnMetric::Euclidean   ? "euclidean"
                  : metric == KnnMetric::Manhattan ? "manhattan"
                                                   : "minkowski(" + std::to_string(static_cast<int>(minkowski_p)) + ")";
  return "k=" + std::to_string(k) + "," + m + "," + (weighting == KnnWeighting::Uniform ? "uniform" : "inverse_distance");
}

FingerprintDb::FingerprintDb(std::vector<FingerprintVector> features, std::vector<Point2D> positions)
    : raw_(std::move(features)), positions_(std::move(positions)) {
  if (raw_.size() != positions_.size()) throw DimensionMismatch("fingerprint and position counts differ");
  if (raw_.empty()) return;
  const std::size_t dim = raw_.front().size();
  for (const auto& v : raw_) {
    if (v.size() != dim) throw DimensionMismatch("fingerprints have different dimensions");
  }
  mean_.assign(dim, 0.0);
  std_.assign(dim, 0.0);
  const double n = static_cast<double>(raw_.size());
  for (const auto& v : raw_) {
    for (std::size_t d = 0; d < dim; ++d) mean_[d] += v[d] / n;
  }
  for (const auto& v : raw_) {
    for (std::size_t d = 0; d < dim; ++d) std_[d] += (v[d] - mean_[d]) * (v[d] - mean_[d]) / n;
  }
  for (auto& s : std_) {
    s = std::sqrt(s);
    if (!(s > 0.0)) s = 1.0;  // constant column
  }
  scaled_.reserve(raw_.size());
  for (const auto& v : raw_) scaled_.push_back(standardize(v));
}

std::vector<double> FingerprintDb::standardize(const FingerprintVector& v) const {
  if (v.size() != mean_.size()) {
    throw DimensionMismatch("query dimension " + std::to_string(v.size()) + " != database dimension " +
                            std::to_string(mean_.size()));
  }
  std::vector<double> out(v.size());
  for (std::size_t d = 0; d < v.size(); ++d) out[d] = (v[d] - mean_[d]) / std_[d];
  return out;
}

void FingerprintDb::save(const std::filesystem::path& path) const {
  nn::ParamStore store;
  const std::size_t n = size();
  const std::size_t dim = dimension();
  nn::Tensor feats({n, dim});
  nn::Tensor pos({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(raw_[i].begin(), raw_[i].end(), feats.data() + i * dim);
    pos[2 * i] = positions_[i].x;
    pos[2 * i + 1] = positions_[i].y;
  }
  store.add("features", std::move(feats));
  store.add("positions", std::move(pos));
  store.add("mean", nn::Tensor({dim}, mean_));
  store.add("std", nn::Tensor({dim}, std_));
  nn::save_param_store(path, store);
}

FingerprintDb FingerprintDb::load(const std::filesystem::path& path) {
  const auto store = nn::load_param_store(path);
  const auto& feats = store.get("features");
  const auto& pos = store.get("positions");
  if (feats.rank() != 2 || pos.rank() != 2 || pos.dim(1) != 2 || feats.dim(0) != pos.dim(0)) {
    throw SchemaError("fingerprint database tensors have inconsistent shapes");
  }
  const std::size_t n = feats.dim(0);
  const std::size_t dim = feats.dim(1);
  std::vector<FingerprintVector> raw(n);
  std::vector<Point2D> positions(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw[i].assign(feats.data() + i * dim, feats.data() + (i + 1) * dim);
    positions[i] = {pos[2 * i], pos[2 * i + 1]};
  }
  FingerprintDb db(std::move(raw), std::move(positions));
  // Keep the persisted scaling rather than refitting, so loaded predictions match bit for bit.
  db.mean_ = store.get("mean").values();
  db.std_ = store.get("std").values();
  for (std::size_t i = 0; i < n; ++i) db.scaled_[i] = db.standardize(db.raw_[i]);
  return db;
}

double knn_distance(std::span<const double> a, std::span<const double> b, const KnnConfig& cfg) {
  double s = 0.0;
  switch (cfg.metric) {
    case KnnMetric::Euclidean:
      for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
      return std::sqrt(s);
    case KnnMetric::Manhattan:
      for (std::size_t d = 0; d < a.size(); ++d) s += std::abs(a[d] - b[d]);
      return s;
    case KnnMetric::Minkowski:
      if (cfg.minkowski_p == 3.0) {
        for (std::size_t d = 0; d < a.size(); ++d) {
          const double t = std::abs(a[d] - b[d]);
          s += t * t * t;
        }
      } else {
        for (std::size_t d = 0; d < a.size(); ++d) s += std::pow(std::abs(a[d] - b[d]), cfg.minkowski_p);
      }
      return std::pow(s, 1.0 / cfg.minkowski_p);
  }
  return s;
}

std::vector<std::pair<std::size_t, double>> knn_neighbors(const FingerprintDb& db, const FingerprintVector& query,
                                                          const KnnConfig& cfg) {
  cfg.validate();
  if (db.size() == 0) throw PreconditionError("k-NN database is empty");
  if (static_cast<std::size_t>(cfg.k) > db.size()) throw PreconditionError("k exceeds the database size");
  const auto q = db.standardize(query);
  std::vector<std::pair<std::size_t, double>> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) all[i] = {i, knn_distance(q, db.scaled_[i], cfg)};
  const auto k = static_cast<std::ptrdiff_t>(cfg.k);
  std::partial_sort(all.begin(), all.begin() + k, all.end(), [](const auto& a, const auto& b) {
    return a.second < b.second || (a.second == b.second && a.first < b.first);
  });
  all.resize(static_cast<std::size_t>(cfg.k));
  return all;
}

Point2D knn_predict(const FingerprintDb& db, const FingerprintVector& query, const KnnConfig& cfg) {
  const auto nn = knn_neighbors(db, query, cfg);
  double wsum = 0.0;
  Point2D acc;
  for (const auto& [idx, d] : nn) {
    const double w = cfg.weighting == KnnWeighting::Uniform ? 1.0 : 1.0 / (d + kInverseDistanceEps);
    acc = acc + db.positions_[idx] * w;
    wsum += w;
  }
  return acc * (1.0 / wsum);
}

std::vector<KnnConfig> default_knn_grid() {
  std::vector<KnnConfig> grid;
  for (int k : {1, 3, 5, 7, 9}) {
    for (auto metric : {KnnMetric::Euclidean, KnnMetric::Manhattan, KnnMetric::Minkowski}) {
      for (auto w : {KnnWeighting::Uniform, KnnWeighting::InverseDistance}) {
        grid.push_back(KnnConfig{k, metric, 3.0, w});
      }
    }
  }
  return grid;
}

GridSearchResult grid_search(const FingerprintDb& train_db, const std::vector<FingerprintVector>& val_features,
                             const std::vector<Point2D>& val_truth, const std::vector<KnnConfig>& grid) {
  if (val_features.size() != val_truth.size()) throw LengthMismatch("validation features and truths differ");
  if (val_features.empty()) throw PreconditionError("grid search needs a non-empty validation set");
  if (grid.empty()) throw PreconditionError("grid search needs at least one config");

  // Neighbor lists depend only on the metric; compute them once at the largest k and reuse prefixes.
  auto same_metric = [](const KnnConfig& a, const KnnConfig& b) {
    return a.metric == b.metric && (a.metric != KnnMetric::Minkowski || a.minkowski_p == b.minkowski_p);
  };
  std::vector<std::vector<std::vector<std::pair<std::size_t, double>>>> cache(grid.size());
  std::vector<std::size_t> cache_of(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    grid[g].validate();
    std::size_t owner = g;
    for (std::size_t h = 0; h < g; ++h) {
      if (same_metric(grid[h], grid[g]) && cache_of[h] == h) {
        owner = h;
        break;
      }
    }
    cache_of[g] = owner;
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (cache_of[g] != g) continue;
    int max_k = 0;
    for (std::size_t h = 0; h < grid.size(); ++h) {
      if (cache_of[h] == g) max_k = std::max(max_k, grid[h].k);
    }
    KnnConfig probe = grid[g];
    probe.k = max_k;
    cache[g].reserve(val_features.size());
    for (const auto& q : val_features) cache[g].push_back(knn_neighbors(train_db, q, probe));
  }

  GridSearchResult result;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& cfg = grid[g];
    const auto& lists = cache[cache_of[g]];
    double err = 0.0;
    for (std::size_t i = 0; i < val_features.size(); ++i) {
      double wsum = 0.0;
      Point2D acc;
      for (int j = 0; j < cfg.k; ++j) {
        const auto& [idx, d] = lists[i][static_cast<std::size_t>(j)];
        const double w = cfg.weighting == KnnWeighting::Uniform ? 1.0 : 1.0 / (d + kInverseDistanceEps);
        acc = acc + train_db.positions()[idx] * w;
        wsum += w;
      }
      err += distance(acc * (1.0 / wsum), val_truth[i]);
    }
    err /= static_cast<double>(val_features.size());
    result.table.emplace_back(cfg, err);
    if (err < best_err) {
      best_err = err;
      result.best = cfg;
    }
  }
  return result;
}

}  // namespace secloc
