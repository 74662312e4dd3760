// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "secloc/features.hpp"
#include "secloc/nn/attention.hpp"
#include "secloc/nn/layers.hpp"
#include "secloc/nn/loss.hpp"

namespace secloc {

/// Architecture of the localizer. The four named variants differ only in the three flags.
struct ArchConfig {
  std::size_t n_anchors = 8;
  std::size_t l_samples = 256;
  std::vector<std::size_t> conv_channels = {8, 16, 32};
  std::size_t kernel = 7;
  std::size_t pool = 2;
  std::size_t feature_dim = 64;  // per-anchor CNN feature f_i
  std::size_t embed_dim = 32;    // embedding of the anchor descriptor (xy or slot) and dt
  std::size_t token_dim = 64;    // per-anchor token fed to the fusion stage
  bool use_attention = true;
  std::size_t heads = 4;
  std::size_t key_dim = 16;
  std::size_t value_dim = 96;
  nn::AttentionMode attention_mode = nn::AttentionMode::GlobalQuery;
  bool use_tdoa = true;
  bool use_anchor_pos = true;
  std::vector<std::size_t> head_hidden = {128, 64};

  static ArchConfig full();
  static ArchConfig non_attention();
  static ArchConfig non_tdoa();
  static ArchConfig non_geometry();  // neither anchor positions nor TDoA
  static ArchConfig variant(const std::string& name);

  std::string variant_name() const;
  /// Anchor coordinates, or a one-hot slot index when coordinates are off, plus dt when enabled.
  std::size_t geometry_inputs() const { return (use_anchor_pos ? 2u : n_anchors) + (use_tdoa ? 1u : 0u); }
  std::size_t fused_dim() const { return use_attention ? heads * value_dim : n_anchors * token_dim; }
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

inline const std::vector<std::string> kVariantNames = {"full", "non_attention", "non_tdoa", "non_geometry"};

nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

/// Output of one forward pass.
struct ModelOutput {
  Point2D pred;                   // meters
  std::vector<double> attention;  // [heads x n_anchors]; uniform over present anchors without attention
};

/// Per-sample scratch buffers, reused across calls. Not shareable between threads.
struct ModelWorkspace {
  struct AnchorTrace {
    std::vector<std::vector<double>> conv_out;  // post-ReLU conv outputs per block
    std::vector<std::vector<double>> pool_out;
    std::vector<std::vector<std::size_t>> pool_idx;
    std::vector<double> feature;  // f_i (post-ReLU)
    std::vector<double> geometry;
    std::vector<double> embed;    // tanh output
    std::vector<double> token_in; // [f_i; e_i]
  };
  std::vector<AnchorTrace> anchors;
  std::vector<double> tokens;  // [n, token_dim]
  std::vector<std::uint8_t> mask;
  nn::AttentionFusion::Cache attention;
  std::vector<double> fused;
  std::vector<std::vector<double>> head_out;  // post-activation outputs of every head layer
  std::vector<double> weights;
};

/// The CNN + attention localizer. Holds layer descriptors only; parameters live in a ParamStore.
class LocalizerModel {
 public:
  LocalizerModel(ArchConfig arch, NormalizationSpec norm);

  const ArchConfig& arch() const noexcept { return arch_; }
  const NormalizationSpec& norm() const noexcept { return norm_; }
  /// Zero-valued parameter layout.
  const nn::ParamStore& layout() const noexcept { return layout_; }
  std::size_t parameter_count() const { return layout_.parameter_count(); }

  nn::ParamStore init_params(std::uint64_t seed) const;

  ModelOutput forward(const nn::ParamStore& params, const FeatureBundle& bundle) const;
  ModelOutput forward(const nn::ParamStore& params, const FeatureBundle& bundle, ModelWorkspace& ws) const;

  /// Huber loss for one sample; accumulates d loss / d params into `grads`.
  double loss_and_grad(const nn::ParamStore& params, const FeatureBundle& bundle, Point2D truth,
                       nn::ParamStore& grads, ModelWorkspace& ws) const;

 private:
  void check_bundle(const FeatureBundle& bundle) const;

  ArchConfig arch_;
  NormalizationSpec norm_;
  nn::ParamStore layout_;
  std::vector<nn::Conv1d> convs_;
  nn::Dense cnn_dense_;
  nn::Dense embed_;
  nn::Dense token_;
  nn::AttentionFusion attention_;
  std::vector<nn::Dense> head_;
};

}  // namespace secloc
