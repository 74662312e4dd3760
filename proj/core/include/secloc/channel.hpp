// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "secloc/geometry.hpp"

namespace secloc {

using Complex = std::complex<double>;
using Rng = std::mt19937_64;

/// One anchor's sampled channel impulse response.
struct CirVector {
  std::vector<Complex> samples;
  double sample_period = 0.0;  // seconds per sample

  std::size_t size() const noexcept { return samples.size(); }
  double energy() const;
  friend bool operator==(const CirVector&, const CirVector&) = default;
};

struct ChannelConfig {
  std::size_t l_samples = 256;
  double sample_period = 5e-9;
  int n_reflections_min = 1;
  int n_reflections_max = 4;
  double reflection_amp_min = 0.1;   // fraction of the nominal direct-path amplitude
  double reflection_amp_max = 0.6;
  double reflection_excess_delay_min = 5e-9;  // seconds after the direct path
  double reflection_excess_delay_max = 100e-9;
  double nlos_direct_attenuation = 0.2;  // 0 blocks the direct path entirely
  double nlos_reflection_amp_min = 0.4;
  double nlos_reflection_amp_max = 0.9;
  double noise_floor_std = 0.005;  // per real component
  double pulse_width = 8.0;        // full support of the raised-cosine bump, samples
  bool random_direct_phase = false;
  std::uint64_t rng_seed = 1;

  void validate() const;
  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

/// Region where the device loses line of sight to the listed anchors (all anchors when empty).
struct NlosZone {
  Rect area;
  std::vector<int> anchors;

  friend bool operator==(const NlosZone&, const NlosZone&) = default;
};

struct EnvironmentMap {
  Rect bounds;
  std::vector<NlosZone> nlos_zones;
  AnchorSet anchor_set;

  void validate() const;
  bool is_nlos(Point2D loc, int anchor_id) const;
  /// Longest anchor-to-map distance, used to size the CIR window.
  double max_range() const;
};

/// Throws ConfigError when the CIR window cannot hold the latest possible path on this map.
void validate_window(const EnvironmentMap& env, const ChannelConfig& cfg, const PhysConsts& consts = {});

/// One measurement burst: a CIR per live anchor plus ground truth.
struct CirRecord {
  Point2D truth;
  std::map<int, CirVector> cirs;
  std::set<int> dropped;
  std::set<int> nlos;  // anchors without line of sight (simulation metadata)
  int traj = 0;
  int idx = 0;

  bool is_nlos() const noexcept { return !nlos.empty(); }
  bool present(int anchor_id) const { return cirs.count(anchor_id) > 0; }
  friend bool operator==(const CirRecord&, const CirRecord&) = default;
};

/// Checks the CirRecord invariants against an anchor layout. Throws SchemaError.
void check_record(const CirRecord& record, const AnchorSet& anchors);

/// Raised-cosine bump of full width `width` samples evaluated `offset` samples from its center.
double pulse_shape(double offset, double width);

/// Superposes `amplitude * pulse(k - center)` onto the samples.
void add_pulse(std::span<Complex> samples, double center, Complex amplitude, double width);

/// Deterministic stream seed for record `idx` of trajectory `traj`.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t traj, std::uint64_t idx);

CirVector synth_cir(Point2D loc, const Anchor& anchor, const EnvironmentMap& env, const ChannelConfig& cfg,
                    Rng& rng);

/// Synthesizes all anchors for one location with its own RNG stream.
CirRecord synth_record(Point2D loc, const EnvironmentMap& env, const ChannelConfig& cfg, int traj, int idx);

/// Positions every `step` meters of arc length along the polyline, endpoints included.
std::vector<Point2D> interpolate_waypoints(std::span<const Point2D> waypoints, double step);

std::vector<CirRecord> synth_trajectory(std::span<const Point2D> waypoints, double step,
                                        const EnvironmentMap& env, const ChannelConfig& cfg, int traj = 0);

}  // namespace secloc
