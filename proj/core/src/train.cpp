// SPDX-License-Identifier: Apache-2.0
#include "secloc/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "secloc/errors.hpp"
#include "secloc/nn/adam.hpp"

namespace secloc {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(lr_final_frac > 0.0 && lr_final_frac <= 1.0)) throw ConfigError("train.lr_final_frac must be in (0, 1]");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must be in (0, 1)");
  if (oversample_nlos == 0) throw ConfigError("train.oversample_nlos must be at least 1");
  if (threads == 0) throw ConfigError("train.threads must be at least 1");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (!(anchor_dropout >= 0.0 && anchor_dropout < 1.0)) throw ConfigError("train.anchor_dropout must be in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size},
          {"lr", c.lr},                 {"lr_final_frac", c.lr_final_frac},
          {"val_fraction", c.val_fraction}, {"patience", c.patience},
          {"rng_seed", c.rng_seed},     {"oversample_nlos", c.oversample_nlos},
          {"weight_decay", c.weight_decay}, {"anchor_dropout", c.anchor_dropout}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  constexpr std::string_view path = "train";
  detail::check_keys(j,
                     {"epochs", "batch_size", "lr", "lr_final_frac", "val_fraction", "patience", "rng_seed",
                      "oversample_nlos", "threads", "weight_decay", "anchor_dropout"},
                     path);
  TrainConfig c;
  detail::read_opt(j, "epochs", c.epochs, path);
  detail::read_opt(j, "batch_size", c.batch_size, path);
  detail::read_opt(j, "lr", c.lr, path);
  detail::read_opt(j, "lr_final_frac", c.lr_final_frac, path);
  detail::read_opt(j, "val_fraction", c.val_fraction, path);
  detail::read_opt(j, "patience", c.patience, path);
  detail::read_opt(j, "rng_seed", c.rng_seed, path);
  detail::read_opt(j, "oversample_nlos", c.oversample_nlos, path);
  detail::read_opt(j, "threads", c.threads, path);
  detail::read_opt(j, "weight_decay", c.weight_decay, path);
  detail::read_opt(j, "anchor_dropout", c.anchor_dropout, path);
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs) {
    nlohmann::json row = {{"epoch", e.epoch},
                          {"lr", e.lr},
                          {"train_loss", e.train_loss},
                          {"train_error", e.train_error},
                          {"val_error", e.val_error},
                          {"checkpoint", e.checkpoint}};
    if (e.checkpoint) row["checkpoint_train_loss"] = e.checkpoint_train_loss;
    epochs.push_back(std::move(row));
  }
  return {{"epochs", epochs},
          {"best_epoch", log.best_epoch},
          {"best_val_error", log.best_val_error},
          {"train_trajectories", log.train_trajectories},
          {"val_trajectories", log.val_trajectories},
          {"skipped_records", log.skipped_records}};
}

TrainLog train_log_from_json(const nlohmann::json& j) {
  TrainLog log;
  try {
    for (const auto& row : j.at("epochs")) {
      EpochLog e;
      e.epoch = row.at("epoch").get<std::size_t>();
      e.lr = row.at("lr").get<double>();
      e.train_loss = row.at("train_loss").get<double>();
      e.train_error = row.at("train_error").get<double>();
      e.val_error = row.at("val_error").get<double>();
      e.checkpoint = row.at("checkpoint").get<bool>();
      e.checkpoint_train_loss = row.value("checkpoint_train_loss", 0.0);
      log.epochs.push_back(e);
    }
    log.best_epoch = j.at("best_epoch").get<std::size_t>();
    log.best_val_error = j.at("best_val_error").get<double>();
    log.train_trajectories = j.at("train_trajectories").get<std::vector<int>>();
    log.val_trajectories = j.at("val_trajectories").get<std::vector<int>>();
    log.skipped_records = j.value("skipped_records", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("train log: ") + e.what());
  }
  return log;
}

namespace {

// Fisher-Yates with a plain modulo draw, so the permutation is identical on every standard library.
template <class T>
void portable_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

struct Sample {
  FeatureBundle bundle;
  Point2D truth;
  bool nlos = false;
  const CirRecord* record = nullptr;
};

std::vector<Sample> build_samples(const Dataset& ds, std::span<const std::size_t> idx, const NormalizationSpec& norm,
                                  std::size_t& skipped) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    const auto& r = ds.records[i];
    try {
      out.push_back({build_bundle(r, ds.anchors, norm), r.truth, r.is_nlos(), &r});
    } catch (const InsufficientAnchors&) {
      ++skipped;
    }
  }
  return out;
}

// Rebuilds the bundle with one present anchor removed, as if its signal were lost. Needs at least
// four present anchors so three remain.
bool drop_one(const Sample& s, const AnchorSet& anchors, const NormalizationSpec& norm, std::mt19937_64& rng,
              FeatureBundle& out) {
  std::vector<int> present;
  for (std::size_t i = 0; i < s.bundle.anchors.size(); ++i) {
    if (s.bundle.anchors[i].present) present.push_back(anchors[i].id);
  }
  if (present.size() < 4) return false;
  const int victim = present[static_cast<std::size_t>(rng() % present.size())];
  CirRecord r = *s.record;
  r.cirs.erase(victim);
  r.dropped.insert(victim);
  try {
    out = build_bundle(r, anchors, norm);
  } catch (const InsufficientAnchors&) {
    return false;
  }
  return true;
}

double mean_error(const LocalizerModel& model, const nn::ParamStore& params, std::span<const Sample> samples,
                  ModelWorkspace& ws, double* mean_loss = nullptr) {
  double err = 0.0, loss = 0.0;
  for (const auto& s : samples) {
    const auto out = model.forward(params, s.bundle, ws);
    err += distance(out.pred, s.truth);
    loss += nn::huber_loss(out.pred, s.truth).loss;
  }
  const double n = static_cast<double>(std::max<std::size_t>(samples.size(), 1));
  if (mean_loss) *mean_loss = loss / n;
  return err / n;
}

}  // namespace

DataSplit split_by_trajectory(const std::vector<CirRecord>& records, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must be in (0, 1)");
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.traj);
  if (ids.size() < 2) throw ConfigError("training needs at least 2 trajectories to split train/validation");
  std::vector<int> trajs(ids.begin(), ids.end());
  std::mt19937_64 rng(seed ^ 0x5be1'0c5a'11d0'0001ULL);
  portable_shuffle(trajs, rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(trajs.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, trajs.size() - 1);
  DataSplit split;
  split.val_trajectories.assign(trajs.begin(), trajs.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train_trajectories.assign(trajs.begin() + static_cast<std::ptrdiff_t>(n_val), trajs.end());
  std::sort(split.val_trajectories.begin(), split.val_trajectories.end());
  std::sort(split.train_trajectories.begin(), split.train_trajectories.end());
  const std::set<int> val(split.val_trajectories.begin(), split.val_trajectories.end());
  for (std::size_t i = 0; i < records.size(); ++i) (val.count(records[i].traj) ? split.val : split.train).push_back(i);
  if (split.train.empty() || split.val.empty()) throw ConfigError("train/validation split is empty");
  return split;
}

NormalizationSpec default_normalization(const Rect& bounds, const Dataset& dataset) {
  NormalizationSpec n;
  n.bounds = bounds;
  n.tdoa_unit = dataset.sample_period;
  n.l_samples = dataset.l_samples;
  return n;
}

TrainedModel train_model(const Dataset& dataset, const ArchConfig& arch, const NormalizationSpec& norm,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (arch.n_anchors != dataset.anchors.size()) throw ConfigError("model.arch.n_anchors does not match the dataset");
  if (arch.l_samples != dataset.l_samples) throw ConfigError("model.arch.l_samples does not match the dataset");
  const LocalizerModel model(arch, norm);

  const DataSplit split = split_by_trajectory(dataset.records, cfg.val_fraction, cfg.rng_seed);
  TrainedModel result{arch, norm, model.init_params(cfg.rng_seed), {}};
  TrainLog& log = result.log;
  log.train_trajectories = split.train_trajectories;
  log.val_trajectories = split.val_trajectories;

  const auto train = build_samples(dataset, split.train, norm, log.skipped_records);
  const auto val = build_samples(dataset, split.val, norm, log.skipped_records);
  if (train.empty() || val.empty()) throw ConfigError("train/validation split has no usable records");

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::size_t copies = train[i].nlos ? cfg.oversample_nlos : 1;
    for (std::size_t c = 0; c < copies; ++c) pool.push_back(i);
  }

  nn::ParamStore& params = result.params;
  nn::ParamStore best = params;
  nn::AdamState adam = nn::AdamState::for_params(params);
  nn::ParamStore grads = params.zeros_like();
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, cfg.batch_size));
  std::vector<nn::ParamStore> sample_grads(cfg.batch_size, grads);
  std::vector<ModelWorkspace> spaces(workers);
  std::vector<double> sample_loss(cfg.batch_size), sample_err(cfg.batch_size);
  std::vector<FeatureBundle> dropped(cfg.batch_size);
  std::vector<const FeatureBundle*> inputs(cfg.batch_size);
  std::mt19937_64 rng(cfg.rng_seed);
  std::mt19937_64 drop_rng(cfg.rng_seed ^ 0xd20f'0a7c'4e11'0002ULL);

  const std::size_t steps_per_epoch = (pool.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    portable_shuffle(pool, rng);
    EpochLog row;
    row.epoch = epoch;
    double loss_sum = 0.0, err_sum = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += cfg.batch_size, ++step) {
      const std::size_t b = std::min(cfg.batch_size, pool.size() - start);
      for (std::size_t k = 0; k < b; ++k) {
        const Sample& s = train[pool[start + k]];
        inputs[k] = &s.bundle;
        if (cfg.anchor_dropout > 0.0 && static_cast<double>(drop_rng() >> 11) * 0x1.0p-53 < cfg.anchor_dropout &&
            drop_one(s, dataset.anchors, norm, drop_rng, dropped[k])) {
          inputs[k] = &dropped[k];
        }
      }
      auto run = [&](std::size_t k, ModelWorkspace& ws) {
        const Sample& s = train[pool[start + k]];
        sample_grads[k].set_zero();
        sample_loss[k] = model.loss_and_grad(params, *inputs[k], s.truth, sample_grads[k], ws);
        const std::size_t last = ws.head_out.size() - 1;
        const Point2D pred = norm.denormalize_xy({ws.head_out[last][0], ws.head_out[last][1]});
        sample_err[k] = distance(pred, s.truth);
      };
      if (workers == 1) {
        for (std::size_t k = 0; k < b; ++k) run(k, spaces[0]);
      } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool_threads;
        for (std::size_t w = 0; w < workers; ++w) {
          pool_threads.emplace_back([&, w] {
            for (std::size_t k = next++; k < b; k = next++) run(k, spaces[w]);
          });
        }
        for (auto& t : pool_threads) t.join();
      }
      grads.set_zero();
      for (std::size_t k = 0; k < b; ++k) {
        grads.accumulate(sample_grads[k], 1.0 / static_cast<double>(b));
        loss_sum += sample_loss[k];
        err_sum += sample_err[k];
      }
      if (cfg.weight_decay > 0.0) grads.accumulate(params, cfg.weight_decay);
      const double progress = static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(total_steps, 1));
      nn::AdamHyper hyper;
      hyper.lr = cfg.lr * (cfg.lr_final_frac + (1.0 - cfg.lr_final_frac) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      row.lr = hyper.lr;
      nn::adam_step(params, grads, adam, hyper);
    }
    row.train_loss = loss_sum / static_cast<double>(pool.size());
    row.train_error = err_sum / static_cast<double>(pool.size());
    row.val_error = mean_error(model, params, val, spaces[0]);
    if (row.val_error < best_val) {
      best_val = row.val_error;
      best = params;
      since_best = 0;
      row.checkpoint = true;
      mean_error(model, params, train, spaces[0], &row.checkpoint_train_loss);
      log.best_epoch = epoch;
      log.best_val_error = best_val;
    } else {
      ++since_best;
    }
    log.epochs.push_back(row);
    if (cfg.patience > 0 && since_best >= cfg.patience) break;
  }
  result.params = std::move(best);
  return result;
}

std::vector<double> mean_attention(std::span<const double> attention, std::size_t n_anchors) {
  std::vector<double> out(n_anchors, 0.0);
  if (n_anchors == 0 || attention.empty()) return out;
  const std::size_t heads = attention.size() / n_anchors;
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n_anchors; ++i) out[i] += attention[h * n_anchors + i];
  }
  for (auto& v : out) v /= static_cast<double>(heads);
  return out;
}

std::vector<Prediction> predict_batch(std::span<const CirRecord> records, const AnchorSet& anchors,
                                      const TrainedModel& trained) {
  const LocalizerModel model(trained.arch, trained.norm);
  ModelWorkspace ws;
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Prediction p;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto bundle = build_bundle(r, anchors, trained.norm);
      const auto o = model.forward(trained.params, bundle, ws);
      p.ok = true;
      p.pred = o.pred;
      p.attention = o.attention;
    } catch (const Error& e) {
      p.error = e.what();
    }
    p.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(p));
  }
  return out;
}

void save_model(const std::filesystem::path& dir, const TrainedModel& m) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nn::save_param_store(dir / "params.bin", m.params);
  detail::write_json(dir / "arch.json", to_json(m.arch));
  detail::write_json(dir / "norm.json", to_json(m.norm));
  detail::write_json(dir / "train_log.json", to_json(m.log));
  const nlohmann::json manifest = {{"schema", kModelSchema},
                                   {"variant", m.arch.variant_name()},
                                   {"parameter_count", m.params.parameter_count()},
                                   {"params", "params.bin"},
                                   {"arch", "arch.json"},
                                   {"norm", "norm.json"},
                                   {"train_log", "train_log.json"}};
  detail::write_json(dir / "manifest.json", manifest);
}

TrainedModel load_model(const std::filesystem::path& dir) {
  const auto manifest = detail::read_json(dir / "manifest.json");
  if (manifest.value("schema", std::string()) != kModelSchema) {
    throw FormatError(0, (dir / "manifest.json").string() + ": unsupported schema");
  }
  auto file = [&](const char* key) { return dir / manifest.at(key).get<std::string>(); };
  TrainedModel m;
  m.arch = arch_from_json(detail::read_json(file("arch")));
  m.norm = normalization_from_json(detail::read_json(file("norm")));
  m.log = train_log_from_json(detail::read_json(file("train_log")));
  m.params = nn::load_param_store(file("params"));
  const LocalizerModel model(m.arch, m.norm);
  if (!m.params.same_layout(model.layout())) {
    throw FormatError(0, (dir / "params.bin").string() + ": parameter layout does not match arch.json");
  }
  return m;
}

}  // namespace secloc
