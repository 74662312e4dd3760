// SPDX-License-Identifier: Apache-2.0
#include "secloc/config.hpp"

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "secloc/dataset.hpp"
#include "secloc/errors.hpp"

namespace secloc {

namespace {

using detail::check_keys;
using detail::key_path;
using detail::read_opt;
using detail::read_req;

Rect rect_from(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(path + ": expected [x0, y0, x1, y1]");
  try {
    Rect r{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!(r.x1 > r.x0) || !(r.y1 > r.y0)) throw ConfigError(path + ": rectangle is empty");
    return r;
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + ": expected numbers");
  }
}

Point2D point_from(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(path + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

template <class T>
void read_range(const nlohmann::json& j, const char* key, T& lo, T& hi, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 2) throw ConfigError(key_path(path, key) + ": expected [min, max]");
  try {
    lo = (*it)[0].get<T>();
    hi = (*it)[1].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key_path(path, key) + ": wrong type");
  }
}

ChannelConfig channel_from(const nlohmann::json& j, const std::string& path) {
  check_keys(j,
             {"l_samples", "sample_period", "n_reflections", "reflection_amp_range", "reflection_excess_delay_range",
              "nlos_direct_attenuation", "nlos_reflection_amp_range", "noise_floor_std", "pulse_width",
              "random_direct_phase"},
             path);
  ChannelConfig c;
  read_opt(j, "l_samples", c.l_samples, path);
  read_opt(j, "sample_period", c.sample_period, path);
  read_range(j, "n_reflections", c.n_reflections_min, c.n_reflections_max, path);
  read_range(j, "reflection_amp_range", c.reflection_amp_min, c.reflection_amp_max, path);
  read_range(j, "reflection_excess_delay_range", c.reflection_excess_delay_min, c.reflection_excess_delay_max, path);
  read_opt(j, "nlos_direct_attenuation", c.nlos_direct_attenuation, path);
  read_range(j, "nlos_reflection_amp_range", c.nlos_reflection_amp_min, c.nlos_reflection_amp_max, path);
  read_opt(j, "noise_floor_std", c.noise_floor_std, path);
  read_opt(j, "pulse_width", c.pulse_width, path);
  read_opt(j, "random_direct_phase", c.random_direct_phase, path);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("environment." + std::string(e.what()));
  }
  return c;
}

DatasetSpec dataset_from(const nlohmann::json& j, const std::string& path, const std::filesystem::path& base,
                         int default_offset) {
  check_keys(j, {"trajectories", "path", "traj_offset"}, path);
  DatasetSpec d;
  d.traj_offset = default_offset;
  read_opt(j, "traj_offset", d.traj_offset, path);
  if (auto it = j.find("path"); it != j.end()) {
    if (!it->is_string()) throw ConfigError(key_path(path, "path") + ": expected a string");
    std::filesystem::path p = it->get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p)) throw ConfigError(key_path(path, "path") + ": file not found: " + p.string());
    d.path = p;
  }
  if (auto it = j.find("trajectories"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(key_path(path, "trajectories") + ": expected an array");
    for (std::size_t t = 0; t < it->size(); ++t) {
      const std::string tp = key_path(path, "trajectories") + "[" + std::to_string(t) + "]";
      const auto& tj = (*it)[t];
      check_keys(tj, {"waypoints", "step"}, tp);
      TrajectorySpec ts;
      read_opt(tj, "step", ts.step, tp);
      if (!(ts.step > 0.0)) throw ConfigError(key_path(tp, "step") + ": must be positive");
      const auto wp = tj.find("waypoints");
      if (wp == tj.end() || !wp->is_array() || wp->size() < 2) {
        throw ConfigError(key_path(tp, "waypoints") + ": expected at least 2 points");
      }
      for (std::size_t k = 0; k < wp->size(); ++k) {
        ts.waypoints.push_back(point_from((*wp)[k], key_path(tp, "waypoints") + "[" + std::to_string(k) + "]"));
      }
      d.trajectories.push_back(std::move(ts));
    }
  }
  if (d.path && !d.trajectories.empty()) throw ConfigError(path + ": give either \"path\" or \"trajectories\"");
  if (!d.path && d.trajectories.empty()) throw ConfigError(path + ": needs \"path\" or \"trajectories\"");
  return d;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key, const std::string& path,
                                     std::vector<std::string> fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key_path(path, key) + ": expected a list of strings");
  }
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t new_seed) {
  seed = new_seed;
  channel.rng_seed = new_seed;
  train.rng_seed = new_seed;
  for (auto& a : attacks) a.seed = new_seed;
}

std::filesystem::path ExperimentConfig::train_path() const {
  return train_data.path ? *train_data.path : output_dir / "data" / "train.jsonl";
}

std::filesystem::path ExperimentConfig::test_path() const {
  return test_data.path ? *test_data.path : output_dir / "data" / "test.jsonl";
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  check_keys(j,
             {"seed", "output_dir", "environment", "train_data", "test_data", "model", "methods", "attacks",
              "attack_compare", "ablation", "bench", "export"},
             "");
  ExperimentConfig c;
  if (!j.contains("seed")) throw ConfigError("seed: required key missing");
  if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0) throw ConfigError("seed: expected a non-negative integer");
  const auto seed = j["seed"].get<std::uint64_t>();

  c.output_dir = read_req<std::string>(j, "output_dir", "");
  if (c.output_dir.is_relative()) c.output_dir = base_dir / c.output_dir;

  if (!j.contains("environment")) throw ConfigError("environment: required key missing");
  const auto& ej = j["environment"];
  check_keys(ej, {"bounds", "anchors", "nlos_zones", "channel"}, "environment");
  if (!ej.contains("bounds")) throw ConfigError("environment.bounds: required key missing");
  c.env.bounds = rect_from(ej["bounds"], "environment.bounds");
  if (!ej.contains("anchors")) throw ConfigError("environment.anchors: required key missing");
  try {
    c.env.anchor_set = anchors_from_json(nlohmann::json{{"anchors", ej["anchors"]}});
  } catch (const Error& e) {
    throw ConfigError(std::string("environment.anchors: ") + e.what());
  }
  if (auto zones = ej.find("nlos_zones"); zones != ej.end()) {
    if (!zones->is_array()) throw ConfigError("environment.nlos_zones: expected an array");
    for (std::size_t z = 0; z < zones->size(); ++z) {
      const std::string zp = "environment.nlos_zones[" + std::to_string(z) + "]";
      const auto& zj = (*zones)[z];
      check_keys(zj, {"area", "anchors"}, zp);
      NlosZone zone;
      if (!zj.contains("area")) throw ConfigError(zp + ".area: required key missing");
      zone.area = rect_from(zj["area"], zp + ".area");
      read_opt(zj, "anchors", zone.anchors, zp);
      c.env.nlos_zones.push_back(std::move(zone));
    }
  }
  c.env.validate();
  if (ej.contains("channel")) c.channel = channel_from(ej["channel"], "environment.channel");
  validate_window(c.env, c.channel);

  if (!j.contains("train_data")) throw ConfigError("train_data: required key missing");
  if (!j.contains("test_data")) throw ConfigError("test_data: required key missing");
  c.train_data = dataset_from(j["train_data"], "train_data", base_dir, 0);
  c.test_data = dataset_from(j["test_data"], "test_data", base_dir, 1000);
  for (const auto* spec : {&c.train_data, &c.test_data}) {
    for (const auto& t : spec->trajectories) {
      for (const auto& p : t.waypoints) {
        if (!c.env.bounds.contains(p)) {
          throw ConfigError(std::string(spec == &c.train_data ? "train_data" : "test_data") +
                            ".trajectories: waypoint outside environment.bounds");
        }
      }
    }
  }

  c.arch.n_anchors = c.env.anchor_set.size();
  c.arch.l_samples = c.channel.l_samples;
  if (auto mj = j.find("model"); mj != j.end()) {
    check_keys(*mj, {"arch", "train"}, "model");
    if (auto aj = mj->find("arch"); aj != mj->end()) {
      check_keys(*aj,
                 {"variant", "conv_channels", "kernel", "pool", "feature_dim", "embed_dim", "token_dim", "heads",
                  "key_dim", "value_dim", "attention_mode", "head_hidden"},
                 "model.arch");
      nlohmann::json merged = *aj;
      std::string variant = "full";
      read_opt(*aj, "variant", variant, "model.arch");
      const ArchConfig flags = ArchConfig::variant(variant);
      merged.erase("variant");
      merged["n_anchors"] = c.arch.n_anchors;
      merged["l_samples"] = c.arch.l_samples;
      merged["use_attention"] = flags.use_attention;
      merged["use_tdoa"] = flags.use_tdoa;
      merged["use_anchor_pos"] = flags.use_anchor_pos;
      c.arch = arch_from_json(merged);
    }
    if (auto tj = mj->find("train"); tj != mj->end()) {
      if (tj->contains("rng_seed")) throw ConfigError("model.train.rng_seed: derived from the top-level seed");
      c.train = train_config_from_json(*tj);
    }
  }
  c.arch.validate();

  c.methods = string_list(j, "methods", "methods", c.methods);
  for (const auto& m : c.methods) {
    if (m != "sec5gloc" && m != "knn" && m != "tdoa") throw ConfigError("methods: unknown method \"" + m + "\"");
  }
  if (auto aj = j.find("attacks"); aj != j.end()) {
    if (!aj->is_array()) throw ConfigError("attacks: expected an array");
    for (std::size_t a = 0; a < aj->size(); ++a) {
      if ((*aj)[a].contains("seed")) throw ConfigError("attacks[" + std::to_string(a) + "].seed: derived from the top-level seed");
      c.attacks.push_back(attack_spec_from_json((*aj)[a], "attacks[" + std::to_string(a) + "]"));
    }
  }
  c.attack_compare = string_list(j, "attack_compare", "attack_compare", c.attack_compare);
  for (const auto& v : c.attack_compare) {
    try {
      (void)ArchConfig::variant(v);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("attack_compare: ") + e.what());
    }
  }
  if (auto ab = j.find("ablation"); ab != j.end()) {
    check_keys(*ab, {"variants"}, "ablation");
    c.ablation_variants = string_list(*ab, "variants", "ablation", c.ablation_variants);
    for (const auto& v : c.ablation_variants) {
      try {
        (void)ArchConfig::variant(v);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("ablation.variants: ") + e.what());
      }
    }
  }
  if (auto bj = j.find("bench"); bj != j.end()) {
    check_keys(*bj, {"records"}, "bench");
    read_opt(*bj, "records", c.bench_records, "bench");
    if (c.bench_records == 0) throw ConfigError("bench.records: must be positive");
  }
  if (auto xj = j.find("export"); xj != j.end()) {
    check_keys(*xj, {"heatmap_bin"}, "export");
    read_opt(*xj, "heatmap_bin", c.heatmap_bin, "export");
    if (!(c.heatmap_bin > 0.0)) throw ConfigError("export.heatmap_bin: must be positive");
  }
  c.apply_seed(seed);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

Dataset synthesize(const ExperimentConfig& cfg, const DatasetSpec& spec) {
  if (spec.path) return load_dataset(*spec.path);
  Dataset ds;
  ds.anchors = cfg.env.anchor_set;
  ds.l_samples = cfg.channel.l_samples;
  ds.sample_period = cfg.channel.sample_period;
  for (std::size_t t = 0; t < spec.trajectories.size(); ++t) {
    const auto& ts = spec.trajectories[t];
    auto recs = synth_trajectory(ts.waypoints, ts.step, cfg.env, cfg.channel, spec.traj_offset + static_cast<int>(t));
    ds.records.insert(ds.records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return ds;
}

}  // namespace secloc
