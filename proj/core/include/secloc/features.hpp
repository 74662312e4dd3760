// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "secloc/channel.hpp"

namespace secloc {

inline constexpr double kDefaultThresholdFrac = 0.4;
inline constexpr double kNoiseGateFactor = 6.0;

struct ToaEstimate {
  int anchor_id = 0;
  std::optional<double> toa;  // seconds, set only for valid estimates
  double peak_magnitude = 0.0;

  bool valid() const noexcept { return toa.has_value(); }
};

/// Earliest threshold crossing of |h| followed by 3-point parabolic refinement of the local peak.
/// Returns an invalid estimate when the peak does not clear the noise gate.
ToaEstimate first_path_toa(const CirVector& cir, double threshold_frac = kDefaultThresholdFrac, int anchor_id = 0);

/// Per-record TOA estimates, aligned with the anchor order; dropped anchors are invalid.
std::vector<ToaEstimate> record_toas(const CirRecord& record, const AnchorSet& anchors,
                                     double threshold_frac = kDefaultThresholdFrac);

struct TdoaFeatures {
  int reference_anchor = -1;
  std::vector<std::optional<double>> dt;  // seconds, aligned with the input; empty for invalid anchors
};

/// Differences against the valid anchor with the smallest TOA (ties go to the lowest id).
/// Throws InsufficientAnchors with fewer than two valid estimates.
TdoaFeatures tdoa_features(std::span<const ToaEstimate> toas);

/// Fixed scalings shared between training and inference.
struct NormalizationSpec {
  Rect bounds;             // anchor and target coordinates map to [-1, 1] over these bounds
  double tdoa_unit = 5e-9;  // seconds per TDoA feature unit (one sample period)
  std::size_t l_samples = 256;
  double threshold_frac = kDefaultThresholdFrac;

  Point2D normalize_xy(Point2D p) const;
  Point2D denormalize_xy(Point2D p) const;
  double half_width() const { return 0.5 * bounds.width(); }
  double half_height() const { return 0.5 * bounds.height(); }
  double normalize_tdoa(double seconds) const { return seconds / tdoa_unit; }
  double denormalize_tdoa(double units) const { return units * tdoa_unit; }

  friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;
};

nlohmann::json to_json(const NormalizationSpec& norm);
NormalizationSpec normalization_from_json(const nlohmann::json& j);

struct AnchorFeatures {
  std::vector<double> cir;  // 2 x L row-major: real row then imaginary row
  Point2D anchor_xy;        // normalized coordinates
  double tdoa = 0.0;        // in NormalizationSpec::tdoa_unit
  bool present = false;
};

struct FeatureBundle {
  std::vector<AnchorFeatures> anchors;
  int reference_anchor = -1;
  std::size_t l_samples = 0;

  std::size_t n_present() const;
};

/// Model input for one record. CIRs are divided by the record's largest magnitude over present
/// anchors; anchors that are dropped or have no valid TOA are zero-filled and marked absent.
FeatureBundle build_bundle(const CirRecord& record, const AnchorSet& anchors, const NormalizationSpec& norm);

using FingerprintVector = std::vector<double>;
inline constexpr std::size_t kFingerprintFeaturesPerAnchor = 5;

/// Per anchor: energy, max magnitude, argmax delay, RMS delay spread, leading-edge delay.
/// Delays are in seconds; dropped anchors contribute zeros.
FingerprintVector fingerprint_vector(const CirRecord& record, std::size_t n_anchors);

}  // namespace secloc
