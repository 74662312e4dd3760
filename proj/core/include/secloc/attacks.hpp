// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "secloc/channel.hpp"
#include "secloc/train.hpp"

namespace secloc {

enum class AttackKind { SpoofEarlyPath, GaussianNoise, AnchorDrop, RemoveDirectPath };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackSpec {
  AttackKind kind = AttackKind::SpoofEarlyPath;
  std::optional<int> fixed_target;  // unset: per-record highest clean attention
  double spoof_offset = 5.0;        // meters closer than the measured first path
  double spoof_amp_frac = 0.5;      // of the main-peak magnitude
  double noise_sigma = 0.2;         // in units of the record's normalized CIR amplitude
  double budget_eps = 1.0;          // injected / legitimate energy cap
  bool enforce_budget = false;
  double direct_path_factor = 0.0;  // remove_direct_path keeps this fraction of the direct bump
  std::uint64_t seed = 1;           // noise stream seed

  void validate() const;
  std::string label() const;
  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

nlohmann::json to_json(const AttackSpec& spec);
AttackSpec attack_spec_from_json(const nlohmann::json& j, const std::string& path = "attack");

/// Environment facts an attack needs: the anchor layout, signal speed and the simulator's pulse.
struct AttackEnv {
  AnchorSet anchors;
  PhysConsts consts;
  double pulse_width = 8.0;
};

struct AttackOutcome {
  CirRecord record;
  int anchor_id = -1;
  double energy_ratio = 0.0;  // injected energy / legitimate energy on the target
  bool applied = false;
  bool clamped = false;       // spoof delay hit zero
  std::vector<std::string> chain;  // attacks in application order
  std::optional<CirVector> removed;  // original CIR of a dropped anchor
};

/// Adds a replica of the main-peak pulse spoof_offset meters ahead of the measured first path.
/// Throws AttackInfeasible when the target is absent or no first path is detectable.
AttackOutcome spoof_early_path(const CirRecord& record, int anchor_id, const AttackSpec& spec, const AttackEnv& env);

/// Complex Gaussian noise with per-component std `sigma * scale` on every sample of one anchor.
/// `scale` converts normalized units to raw amplitude; pass record_scale() to follow bundle normalization.
AttackOutcome add_noise(const CirRecord& record, int anchor_id, double sigma, double scale, Rng& rng);

/// Moves the anchor to the dropped set. Throws InsufficientAnchors if fewer than 2 would remain.
AttackOutcome drop_anchor(const CirRecord& record, int anchor_id);

/// Scales the truth-delay direct-path bump by `factor`.
AttackOutcome remove_direct_path(const CirRecord& record, int anchor_id, double factor, const AttackEnv& env);

/// The normalization divisor build_bundle would use: the largest |h| over anchors with a detectable first path.
double record_scale(const CirRecord& record, const AnchorSet& anchors, double threshold_frac = kDefaultThresholdFrac);

/// Applies `spec` to one record. Noise draws from a stream derived from (spec.seed, traj, idx).
AttackOutcome apply_attack(const CirRecord& record, int anchor_id, const AttackSpec& spec, const AttackEnv& env);

/// Applies `spec` on top of an earlier outcome and extends its chain.
AttackOutcome compose(const AttackOutcome& earlier, const AttackSpec& spec, const AttackEnv& env);

/// Argmax of head-averaged attention; ties go to the lowest id.
int highest_attention_anchor(std::span<const double> attention, std::size_t n_anchors);

/// Clean inference then argmax per record; nullopt where inference failed.
std::vector<std::optional<int>> select_target(std::span<const CirRecord> records, const AnchorSet& anchors,
                                              const TrainedModel& model);

}  // namespace secloc
