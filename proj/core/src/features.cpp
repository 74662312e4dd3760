// SPDX-License-Identifier: Apache-2.0
#include "secloc/features.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "secloc/errors.hpp"

namespace secloc {

namespace {

std::vector<double> magnitudes(const CirVector& cir) {
  std::vector<double> mags(cir.size());
  std::transform(cir.samples.begin(), cir.samples.end(), mags.begin(), [](Complex s) { return std::abs(s); });
  return mags;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

ToaEstimate first_path_toa(const CirVector& cir, double threshold_frac, int anchor_id) {
  if (!(threshold_frac > 0.0 && threshold_frac <= 1.0)) {
    throw PreconditionError("threshold_frac must be in (0, 1]");
  }
  ToaEstimate est;
  est.anchor_id = anchor_id;
  if (cir.samples.empty()) return est;

  const auto mags = magnitudes(cir);
  const double peak = *std::max_element(mags.begin(), mags.end());
  if (!(peak > 0.0) || !std::isfinite(peak)) return est;
  if (peak <= kNoiseGateFactor * median_of(mags)) return est;

  const double threshold = threshold_frac * peak;
  std::size_t k = 0;
  while (mags[k] < threshold) ++k;
  while (k + 1 < mags.size() && mags[k + 1] > mags[k]) ++k;

  double refined = static_cast<double>(k);
  if (k > 0 && k + 1 < mags.size()) {
    const double y0 = mags[k - 1];
    const double y1 = mags[k];
    const double y2 = mags[k + 1];
    const double denom = y0 - 2.0 * y1 + y2;
    if (denom < 0.0) refined += std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5);
  }
  est.toa = refined * cir.sample_period;
  est.peak_magnitude = mags[k];
  return est;
}

std::vector<ToaEstimate> record_toas(const CirRecord& record, const AnchorSet& anchors, double threshold_frac) {
  std::vector<ToaEstimate> toas;
  toas.reserve(anchors.size());
  for (const auto& a : anchors) {
    auto it = record.cirs.find(a.id);
    if (it == record.cirs.end()) {
      toas.push_back(ToaEstimate{a.id, std::nullopt, 0.0});
    } else {
      toas.push_back(first_path_toa(it->second, threshold_frac, a.id));
    }
  }
  return toas;
}

TdoaFeatures tdoa_features(std::span<const ToaEstimate> toas) {
  const ToaEstimate* ref = nullptr;
  std::size_t n_valid = 0;
  for (const auto& t : toas) {
    if (!t.valid()) continue;
    ++n_valid;
    if (ref == nullptr || *t.toa < *ref->toa || (*t.toa == *ref->toa && t.anchor_id < ref->anchor_id)) ref = &t;
  }
  if (n_valid < 2) {
    throw InsufficientAnchors("TDoA needs at least 2 valid TOAs, got " + std::to_string(n_valid));
  }
  TdoaFeatures out;
  out.reference_anchor = ref->anchor_id;
  out.dt.reserve(toas.size());
  for (const auto& t : toas) {
    if (t.valid()) {
      out.dt.emplace_back(t.anchor_id == ref->anchor_id ? 0.0 : *t.toa - *ref->toa);
    } else {
      out.dt.emplace_back(std::nullopt);
    }
  }
  return out;
}

Point2D NormalizationSpec::normalize_xy(Point2D p) const {
  const Point2D c = bounds.center();
  return {(p.x - c.x) / half_width(), (p.y - c.y) / half_height()};
}

Point2D NormalizationSpec::denormalize_xy(Point2D p) const {
  const Point2D c = bounds.center();
  return {p.x * half_width() + c.x, p.y * half_height() + c.y};
}

nlohmann::json to_json(const NormalizationSpec& norm) {
  return {{"bounds", {norm.bounds.x0, norm.bounds.y0, norm.bounds.x1, norm.bounds.y1}},
          {"tdoa_unit", norm.tdoa_unit},
          {"l_samples", norm.l_samples},
          {"threshold_frac", norm.threshold_frac},
          {"cir_scaling", "record_global_max"}};
}

NormalizationSpec normalization_from_json(const nlohmann::json& j) {
  try {
    NormalizationSpec n;
    const auto& b = j.at("bounds");
    n.bounds = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    n.tdoa_unit = j.at("tdoa_unit").get<double>();
    n.l_samples = j.at("l_samples").get<std::size_t>();
    n.threshold_frac = j.at("threshold_frac").get<double>();
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("normalization spec: ") + e.what());
  }
}

std::size_t FeatureBundle::n_present() const {
  return static_cast<std::size_t>(std::count_if(anchors.begin(), anchors.end(), [](const auto& a) { return a.present; }));
}

FeatureBundle build_bundle(const CirRecord& record, const AnchorSet& anchors, const NormalizationSpec& norm) {
  const auto toas = record_toas(record, anchors, norm.threshold_frac);
  const auto tdoa = tdoa_features(toas);

  double scale = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!toas[i].valid()) continue;
    for (const auto& s : record.cirs.at(anchors[i].id).samples) scale = std::max(scale, std::abs(s));
  }

  FeatureBundle bundle;
  bundle.reference_anchor = tdoa.reference_anchor;
  bundle.l_samples = norm.l_samples;
  bundle.anchors.resize(anchors.size());
  const std::size_t L = norm.l_samples;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    auto& af = bundle.anchors[i];
    af.anchor_xy = norm.normalize_xy(anchors[i].position);
    af.cir.assign(2 * L, 0.0);
    if (!tdoa.dt[i]) continue;
    const auto& samples = record.cirs.at(anchors[i].id).samples;
    if (samples.size() != L) {
      throw ShapeMismatch("record CIR length " + std::to_string(samples.size()) + " does not match l_samples " +
                          std::to_string(L));
    }
    af.present = true;
    af.tdoa = norm.normalize_tdoa(*tdoa.dt[i]);
    for (std::size_t k = 0; k < L; ++k) {
      af.cir[k] = samples[k].real() / scale;
      af.cir[L + k] = samples[k].imag() / scale;
    }
  }
  return bundle;
}

FingerprintVector fingerprint_vector(const CirRecord& record, std::size_t n_anchors) {
  FingerprintVector fp(kFingerprintFeaturesPerAnchor * n_anchors, 0.0);
  for (std::size_t i = 0; i < n_anchors; ++i) {
    auto it = record.cirs.find(static_cast<int>(i));
    if (it == record.cirs.end()) continue;
    const CirVector& cir = it->second;
    const auto mags = magnitudes(cir);
    double energy = 0.0;
    double weighted = 0.0;
    std::size_t argmax = 0;
    for (std::size_t k = 0; k < mags.size(); ++k) {
      const double p = mags[k] * mags[k];
      energy += p;
      weighted += p * static_cast<double>(k);
      if (mags[k] > mags[argmax]) argmax = k;
    }
    double spread = 0.0;
    if (energy > 0.0) {
      const double mean = weighted / energy;
      double var = 0.0;
      for (std::size_t k = 0; k < mags.size(); ++k) {
        const double d = static_cast<double>(k) - mean;
        var += d * d * mags[k] * mags[k];
      }
      spread = std::sqrt(var / energy) * cir.sample_period;
    }
    const auto lead = first_path_toa(cir, kDefaultThresholdFrac, static_cast<int>(i));
    double* f = fp.data() + kFingerprintFeaturesPerAnchor * i;
    f[0] = energy;
    f[1] = mags.empty() ? 0.0 : mags[argmax];
    f[2] = static_cast<double>(argmax) * cir.sample_period;
    f[3] = spread;
    f[4] = lead.valid() ? *lead.toa : 0.0;
  }
  return fp;
}

}  // namespace secloc
