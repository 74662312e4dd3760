// SPDX-License-Identifier: Apache-2.0
#include "secloc/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "secloc/errors.hpp"
#include "secloc/features.hpp"

namespace secloc {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::SpoofEarlyPath: return "spoof_early_path";
    case AttackKind::GaussianNoise: return "gaussian_noise";
    case AttackKind::AnchorDrop: return "anchor_drop";
    case AttackKind::RemoveDirectPath: return "remove_direct_path";
  }
  return "unknown";
}

AttackKind attack_kind_from_string(const std::string& s) {
  for (auto k : {AttackKind::SpoofEarlyPath, AttackKind::GaussianNoise, AttackKind::AnchorDrop,
                 AttackKind::RemoveDirectPath}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown attack kind \"" + s + "\"");
}

void AttackSpec::validate() const {
  if (!(spoof_amp_frac > 0.0 && spoof_amp_frac <= 1.0)) throw ConfigError("spoof_amp_frac must be in (0, 1]");
  if (!(spoof_offset >= 0.0) || !std::isfinite(spoof_offset)) throw ConfigError("spoof_offset must be non-negative");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be non-negative");
  if (!(budget_eps > 0.0)) throw ConfigError("budget_eps must be positive");
  if (!(direct_path_factor >= 0.0 && direct_path_factor <= 1.0)) {
    throw ConfigError("direct_path_factor must be in [0, 1]");
  }
  if (fixed_target && *fixed_target < 0) throw ConfigError("target must be a non-negative anchor id");
}

std::string AttackSpec::label() const {
  std::ostringstream s;
  s << to_string(kind);
  switch (kind) {
    case AttackKind::SpoofEarlyPath: s << "(offset=" << spoof_offset << "m,amp=" << spoof_amp_frac << ")"; break;
    case AttackKind::GaussianNoise: s << "(sigma=" << noise_sigma << ")"; break;
    case AttackKind::RemoveDirectPath: s << "(factor=" << direct_path_factor << ")"; break;
    case AttackKind::AnchorDrop: break;
  }
  s << "@" << (fixed_target ? "anchor" + std::to_string(*fixed_target) : std::string("highest_attention"));
  return s.str();
}

nlohmann::json to_json(const AttackSpec& a) {
  nlohmann::json j = {{"kind", to_string(a.kind)},
                      {"spoof_offset", a.spoof_offset},
                      {"spoof_amp_frac", a.spoof_amp_frac},
                      {"noise_sigma", a.noise_sigma},
                      {"budget_eps", a.budget_eps},
                      {"enforce_budget", a.enforce_budget},
                      {"direct_path_factor", a.direct_path_factor},
                      {"seed", a.seed}};
  if (a.fixed_target) {
    j["target"] = *a.fixed_target;
  } else {
    j["target"] = "highest_attention";
  }
  return j;
}

AttackSpec attack_spec_from_json(const nlohmann::json& j, const std::string& path) {
  detail::check_keys(j,
                     {"kind", "target", "spoof_offset", "spoof_amp_frac", "noise_sigma", "budget_eps",
                      "enforce_budget", "direct_path_factor", "seed"},
                     path);
  AttackSpec a;
  try {
    a.kind = attack_kind_from_string(detail::read_req<std::string>(j, "kind", path));
  } catch (const ConfigError& e) {
    throw ConfigError(detail::key_path(path, "kind") + ": " + e.what());
  }
  if (auto it = j.find("target"); it != j.end()) {
    if (it->is_string() && it->get<std::string>() == "highest_attention") {
      a.fixed_target.reset();
    } else if (it->is_number_integer()) {
      a.fixed_target = it->get<int>();
    } else {
      throw ConfigError(detail::key_path(path, "target") + ": expected an anchor id or \"highest_attention\"");
    }
  }
  detail::read_opt(j, "spoof_offset", a.spoof_offset, path);
  detail::read_opt(j, "spoof_amp_frac", a.spoof_amp_frac, path);
  detail::read_opt(j, "noise_sigma", a.noise_sigma, path);
  detail::read_opt(j, "budget_eps", a.budget_eps, path);
  detail::read_opt(j, "enforce_budget", a.enforce_budget, path);
  detail::read_opt(j, "direct_path_factor", a.direct_path_factor, path);
  detail::read_opt(j, "seed", a.seed, path);
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return a;
}

namespace {

const CirVector& target_cir(const CirRecord& record, int anchor_id) {
  auto it = record.cirs.find(anchor_id);
  if (it == record.cirs.end()) {
    throw AttackInfeasible("anchor " + std::to_string(anchor_id) + " is not present in the record");
  }
  return it->second;
}

AttackOutcome start(const CirRecord& record, int anchor_id, const char* name) {
  AttackOutcome o;
  o.record = record;
  o.anchor_id = anchor_id;
  o.chain.emplace_back(name);
  return o;
}

}  // namespace

AttackOutcome spoof_early_path(const CirRecord& record, int anchor_id, const AttackSpec& spec, const AttackEnv& env) {
  const CirVector& cir = target_cir(record, anchor_id);
  const auto toa = first_path_toa(cir, kDefaultThresholdFrac, anchor_id);
  if (!toa.valid()) throw AttackInfeasible("no detectable first path on anchor " + std::to_string(anchor_id));

  std::size_t peak = 0;
  for (std::size_t k = 1; k < cir.size(); ++k) {
    if (std::abs(cir.samples[k]) > std::abs(cir.samples[peak])) peak = k;
  }
  const Complex main = cir.samples[peak];
  const double sp = cir.sample_period;
  double center = *toa.toa / sp - spec.spoof_offset / (env.consts.c * sp);

  AttackOutcome o = start(record, anchor_id, "spoof_early_path");
  if (center < 0.0) {
    center = 0.0;
    o.clamped = true;
  }
  if (center > static_cast<double>(cir.size() - 1)) throw AttackInfeasible("spoofed delay falls outside the CIR window");

  Complex amp = spec.spoof_amp_frac * main;
  std::vector<Complex> bump(cir.size(), Complex{});
  add_pulse(bump, center, amp, env.pulse_width);
  double injected = 0.0;
  for (const auto& b : bump) injected += std::norm(b);
  const double legit = cir.energy();
  double ratio = legit > 0.0 ? injected / legit : 0.0;
  double scale = 1.0;
  if (spec.enforce_budget && ratio > spec.budget_eps) {
    scale = std::sqrt(spec.budget_eps / ratio);
    ratio = spec.budget_eps;
  }
  auto& out = o.record.cirs.at(anchor_id).samples;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += scale * bump[k];
  o.energy_ratio = ratio;
  o.applied = true;
  return o;
}

AttackOutcome add_noise(const CirRecord& record, int anchor_id, double sigma, double scale, Rng& rng) {
  const CirVector& cir = target_cir(record, anchor_id);
  AttackOutcome o = start(record, anchor_id, "gaussian_noise");
  if (sigma == 0.0) return o;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double std = sigma * scale;
  auto& out = o.record.cirs.at(anchor_id).samples;
  double injected = 0.0;
  for (auto& s : out) {
    const double re = gauss(rng) * std;
    const double im = gauss(rng) * std;
    s += Complex(re, im);
    injected += re * re + im * im;
  }
  const double legit = cir.energy();
  o.energy_ratio = legit > 0.0 ? injected / legit : 0.0;
  o.applied = true;
  return o;
}

AttackOutcome drop_anchor(const CirRecord& record, int anchor_id) {
  const CirVector& cir = target_cir(record, anchor_id);
  if (record.cirs.size() < 3) {
    throw InsufficientAnchors("dropping anchor " + std::to_string(anchor_id) + " leaves fewer than 2 anchors");
  }
  AttackOutcome o = start(record, anchor_id, "anchor_drop");
  o.removed = cir;
  o.record.cirs.erase(anchor_id);
  o.record.dropped.insert(anchor_id);
  o.applied = true;
  return o;
}

AttackOutcome remove_direct_path(const CirRecord& record, int anchor_id, double factor, const AttackEnv& env) {
  const CirVector& cir = target_cir(record, anchor_id);
  const double sp = cir.sample_period;
  const double center = true_toa(record.truth, env.anchors.at(anchor_id), env.consts) / sp;
  const auto k = static_cast<std::size_t>(std::lround(center));
  AttackOutcome o = start(record, anchor_id, "remove_direct_path");
  if (k >= cir.size()) throw AttackInfeasible("direct path lies outside the CIR window");
  const double shape = pulse_shape(static_cast<double>(k) - center, env.pulse_width);
  if (shape <= 0.0) return o;
  const Complex direct = cir.samples[k] / shape;
  std::vector<Complex> bump(cir.size(), Complex{});
  add_pulse(bump, center, (factor - 1.0) * direct, env.pulse_width);
  auto& out = o.record.cirs.at(anchor_id).samples;
  double removed = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += bump[i];
    removed += std::norm(bump[i]);
  }
  const double legit = cir.energy();
  o.energy_ratio = legit > 0.0 ? removed / legit : 0.0;
  o.applied = true;
  return o;
}

double record_scale(const CirRecord& record, const AnchorSet& anchors, double threshold_frac) {
  double scale = 0.0;
  for (const auto& a : anchors) {
    auto it = record.cirs.find(a.id);
    if (it == record.cirs.end()) continue;
    if (!first_path_toa(it->second, threshold_frac, a.id).valid()) continue;
    for (const auto& s : it->second.samples) scale = std::max(scale, std::abs(s));
  }
  return scale;
}

AttackOutcome apply_attack(const CirRecord& record, int anchor_id, const AttackSpec& spec, const AttackEnv& env) {
  switch (spec.kind) {
    case AttackKind::SpoofEarlyPath: return spoof_early_path(record, anchor_id, spec, env);
    case AttackKind::GaussianNoise: {
      Rng rng(stream_seed(spec.seed, static_cast<std::uint64_t>(record.traj),
                          static_cast<std::uint64_t>(record.idx) * 64 + static_cast<std::uint64_t>(anchor_id)));
      return add_noise(record, anchor_id, spec.noise_sigma, record_scale(record, env.anchors), rng);
    }
    case AttackKind::AnchorDrop: return drop_anchor(record, anchor_id);
    case AttackKind::RemoveDirectPath: return remove_direct_path(record, anchor_id, spec.direct_path_factor, env);
  }
  throw ConfigError("unknown attack kind");
}

AttackOutcome compose(const AttackOutcome& earlier, const AttackSpec& spec, const AttackEnv& env) {
  const int target = spec.fixed_target.value_or(earlier.anchor_id);
  AttackOutcome next = apply_attack(earlier.record, target, spec, env);
  std::vector<std::string> chain = earlier.chain;
  chain.insert(chain.end(), next.chain.begin(), next.chain.end());
  next.chain = std::move(chain);
  next.applied = next.applied || earlier.applied;
  next.clamped = next.clamped || earlier.clamped;
  next.energy_ratio += earlier.energy_ratio;
  if (!next.removed) next.removed = earlier.removed;
  return next;
}

int highest_attention_anchor(std::span<const double> attention, std::size_t n_anchors) {
  const auto mean = mean_attention(attention, n_anchors);
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean.size(); ++i) {
    if (mean[i] > mean[best]) best = i;
  }
  return static_cast<int>(best);
}

std::vector<std::optional<int>> select_target(std::span<const CirRecord> records, const AnchorSet& anchors,
                                              const TrainedModel& model) {
  const auto preds = predict_batch(records, anchors, model);
  std::vector<std::optional<int>> out;
  out.reserve(preds.size());
  for (const auto& p : preds) {
    if (p.ok) {
      out.emplace_back(anchors[static_cast<std::size_t>(highest_attention_anchor(p.attention, anchors.size()))].id);
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

}  // namespace secloc
