// SPDX-License-Identifier: Apache-2.0
#include "secloc/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "secloc/errors.hpp"

namespace secloc {

double CirVector::energy() const {
  double e = 0.0;
  for (const auto& s : samples) e += std::norm(s);
  return e;
}

void ChannelConfig::validate() const {
  auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (l_samples < 16) throw ConfigError("channel.l_samples must be at least 16");
  if (!(sample_period > 0.0)) throw ConfigError("channel.sample_period must be positive");
  if (n_reflections_min < 0 || n_reflections_max < n_reflections_min) {
    throw ConfigError("channel.n_reflections must satisfy 0 <= min <= max");
  }
  if (!fraction(reflection_amp_min) || !fraction(reflection_amp_max) || reflection_amp_min > reflection_amp_max) {
    throw ConfigError("channel.reflection_amp_range must be an ordered pair in [0,1]");
  }
  if (!fraction(nlos_reflection_amp_min) || !fraction(nlos_reflection_amp_max) ||
      nlos_reflection_amp_min > nlos_reflection_amp_max) {
    throw ConfigError("channel.nlos_reflection_amp_range must be an ordered pair in [0,1]");
  }
  if (!(reflection_excess_delay_min > 0.0) || reflection_excess_delay_max < reflection_excess_delay_min) {
    throw ConfigError("channel.reflection_excess_delay_range must be an ordered pair of positive delays");
  }
  if (!fraction(nlos_direct_attenuation)) throw ConfigError("channel.nlos_direct_attenuation must be in [0,1]");
  if (!(noise_floor_std >= 0.0)) throw ConfigError("channel.noise_floor_std must be non-negative");
  if (!(pulse_width >= 1.0)) throw ConfigError("channel.pulse_width must be at least 1 sample");
}

void EnvironmentMap::validate() const {
  if (!(bounds.x1 > bounds.x0) || !(bounds.y1 > bounds.y0)) throw ConfigError("environment.bounds is empty");
  if (anchor_set.size() < 3) throw ConfigError("environment.anchors needs at least 3 anchors");
  for (std::size_t z = 0; z < nlos_zones.size(); ++z) {
    const auto& zone = nlos_zones[z];
    if (!bounds.contains(zone.area)) {
      throw ConfigError("environment.nlos_zones[" + std::to_string(z) + "] extends outside the bounds");
    }
    for (int id : zone.anchors) {
      if (!anchor_set.contains(id)) {
        throw ConfigError("environment.nlos_zones[" + std::to_string(z) + "] references unknown anchor " +
                          std::to_string(id));
      }
    }
  }
}

bool EnvironmentMap::is_nlos(Point2D loc, int anchor_id) const {
  for (const auto& zone : nlos_zones) {
    if (!zone.area.contains(loc)) continue;
    if (zone.anchors.empty()) return true;
    if (std::find(zone.anchors.begin(), zone.anchors.end(), anchor_id) != zone.anchors.end()) return true;
  }
  return false;
}

double EnvironmentMap::max_range() const {
  const Point2D corners[] = {{bounds.x0, bounds.y0}, {bounds.x1, bounds.y0}, {bounds.x0, bounds.y1}, {bounds.x1, bounds.y1}};
  double r = 0.0;
  for (const auto& a : anchor_set) {
    for (const auto& c : corners) r = std::max(r, distance(a.position, c));
  }
  return r;
}

void validate_window(const EnvironmentMap& env, const ChannelConfig& cfg, const PhysConsts& consts) {
  const double latest = env.max_range() / consts.c + cfg.reflection_excess_delay_max +
                        0.5 * cfg.pulse_width * cfg.sample_period;
  if (!(cfg.sample_period * static_cast<double>(cfg.l_samples) > latest)) {
    throw ConfigError("channel window (l_samples * sample_period) is shorter than the latest path on the map");
  }
}

void check_record(const CirRecord& record, const AnchorSet& anchors) {
  std::size_t expected = 0;
  for (const auto& [id, cir] : record.cirs) {
    if (!anchors.contains(id)) throw SchemaError("record references unknown anchor id " + std::to_string(id));
    if (record.dropped.count(id)) {
      throw SchemaError("anchor " + std::to_string(id) + " is both dropped and present");
    }
    if (expected == 0) expected = cir.size();
    if (cir.size() != expected) throw SchemaError("CIR lengths differ within a record");
  }
  for (int id : record.dropped) {
    if (!anchors.contains(id)) throw SchemaError("record drops unknown anchor id " + std::to_string(id));
  }
  if (record.cirs.size() + record.dropped.size() != anchors.size()) {
    throw SchemaError("record does not cover every anchor (present + dropped != N)");
  }
}

double pulse_shape(double offset, double width) {
  const double half = 0.5 * width;
  if (std::abs(offset) >= half) return 0.0;
  return 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * offset / width));
}

void add_pulse(std::span<Complex> samples, double center, Complex amplitude, double width) {
  const double half = 0.5 * width;
  const auto lo = static_cast<long>(std::max(0.0, std::ceil(center - half)));
  const auto hi = static_cast<long>(std::min(static_cast<double>(samples.size()) - 1.0, std::floor(center + half)));
  for (long k = lo; k <= hi; ++k) {
    const double p = pulse_shape(static_cast<double>(k) - center, width);
    if (p != 0.0) samples[static_cast<std::size_t>(k)] += amplitude * p;
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t traj, std::uint64_t idx) {
  return splitmix64(splitmix64(splitmix64(seed) ^ traj) ^ idx);
}

CirVector synth_cir(Point2D loc, const Anchor& anchor, const EnvironmentMap& env, const ChannelConfig& cfg,
                    Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const PhysConsts consts;
  const double window = static_cast<double>(cfg.l_samples - 1);
  const double direct_center = true_toa(loc, anchor, consts) / cfg.sample_period;
  if (direct_center + 0.5 * cfg.pulse_width > window) {
    throw ConfigError("direct-path delay of anchor " + std::to_string(anchor.id) + " exceeds the CIR window");
  }

  CirVector cir;
  cir.sample_period = cfg.sample_period;
  cir.samples.assign(cfg.l_samples, Complex{});

  const bool nlos = env.is_nlos(loc, anchor.id);
  const double direct_amp = nlos ? cfg.nlos_direct_attenuation : 1.0;
  const double direct_phase = cfg.random_direct_phase ? 2.0 * std::numbers::pi * unit(rng) : 0.0;
  if (direct_amp > 0.0) add_pulse(cir.samples, direct_center, std::polar(direct_amp, direct_phase), cfg.pulse_width);

  const int span = cfg.n_reflections_max - cfg.n_reflections_min + 1;
  int n_refl = cfg.n_reflections_min + static_cast<int>(unit(rng) * span);
  n_refl = std::min(n_refl, cfg.n_reflections_max);
  if (nlos) n_refl = std::max(n_refl, 1);
  const double amp_lo = nlos ? cfg.nlos_reflection_amp_min : cfg.reflection_amp_min;
  const double amp_hi = nlos ? cfg.nlos_reflection_amp_max : cfg.reflection_amp_max;
  for (int r = 0; r < n_refl; ++r) {
    const double excess = cfg.reflection_excess_delay_min +
                          unit(rng) * (cfg.reflection_excess_delay_max - cfg.reflection_excess_delay_min);
    const double amp = amp_lo + unit(rng) * (amp_hi - amp_lo);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    add_pulse(cir.samples, direct_center + excess / cfg.sample_period, std::polar(amp, phase), cfg.pulse_width);
  }

  if (cfg.noise_floor_std > 0.0) {
    for (auto& s : cir.samples) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      s += Complex(re, im) * cfg.noise_floor_std;
    }
  }
  return cir;
}

CirRecord synth_record(Point2D loc, const EnvironmentMap& env, const ChannelConfig& cfg, int traj, int idx) {
  Rng rng(stream_seed(cfg.rng_seed, static_cast<std::uint64_t>(traj), static_cast<std::uint64_t>(idx)));
  CirRecord rec;
  rec.truth = loc;
  rec.traj = traj;
  rec.idx = idx;
  for (const auto& anchor : env.anchor_set) {
    rec.cirs.emplace(anchor.id, synth_cir(loc, anchor, env, cfg, rng));
    if (env.is_nlos(loc, anchor.id)) rec.nlos.insert(anchor.id);
  }
  return rec;
}

std::vector<Point2D> interpolate_waypoints(std::span<const Point2D> waypoints, double step) {
  if (waypoints.size() < 2) throw ConfigError("trajectory needs at least 2 waypoints");
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("trajectory step must be positive");
  double total = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) total += distance(waypoints[i - 1], waypoints[i]);
  if (!(total > 0.0)) throw ConfigError("trajectory waypoints are degenerate (zero length)");

  std::vector<Point2D> out;
  const auto count = static_cast<std::size_t>(std::floor(total / step + 1e-9));
  std::size_t seg = 1;
  double seg_start = 0.0;
  for (std::size_t k = 0; k <= count; ++k) {
    const double s = std::min(static_cast<double>(k) * step, total);
    while (seg + 1 < waypoints.size() && s > seg_start + distance(waypoints[seg - 1], waypoints[seg])) {
      seg_start += distance(waypoints[seg - 1], waypoints[seg]);
      ++seg;
    }
    const Point2D a = waypoints[seg - 1];
    const Point2D b = waypoints[seg];
    const double len = distance(a, b);
    const double t = len > 0.0 ? std::clamp((s - seg_start) / len, 0.0, 1.0) : 0.0;
    out.push_back(a + (b - a) * t);
  }
  return out;
}

std::vector<CirRecord> synth_trajectory(std::span<const Point2D> waypoints, double step,
                                        const EnvironmentMap& env, const ChannelConfig& cfg, int traj) {
  for (const auto& w : waypoints) {
    if (!is_finite(w) || !env.bounds.contains(w)) throw ConfigError("trajectory waypoint outside the map bounds");
  }
  const auto positions = interpolate_waypoints(waypoints, step);
  std::vector<CirRecord> records;
  records.reserve(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    records.push_back(synth_record(positions[k], env, cfg, traj, static_cast<int>(k)));
  }
  return records;
}

}  // namespace secloc
