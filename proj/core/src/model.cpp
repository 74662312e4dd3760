// SPDX-License-Identifier: Apache-2.0
#include "secloc/model.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "secloc/errors.hpp"

namespace secloc {

ArchConfig ArchConfig::full() { return ArchConfig{}; }

ArchConfig ArchConfig::non_attention() {
  ArchConfig a;
  a.use_attention = false;
  return a;
}

ArchConfig ArchConfig::non_tdoa() {
  ArchConfig a;
  a.use_tdoa = false;
  return a;
}

ArchConfig ArchConfig::non_geometry() {
  ArchConfig a;
  a.use_tdoa = false;
  a.use_anchor_pos = false;
  return a;
}

ArchConfig ArchConfig::variant(const std::string& name) {
  if (name == "full") return full();
  if (name == "non_attention") return non_attention();
  if (name == "non_tdoa") return non_tdoa();
  if (name == "non_geometry") return non_geometry();
  throw ConfigError("unknown model variant \"" + name + "\"");
}

std::string ArchConfig::variant_name() const {
  if (!use_attention && use_tdoa && use_anchor_pos) return "non_attention";
  if (use_attention && !use_tdoa && use_anchor_pos) return "non_tdoa";
  if (use_attention && !use_tdoa && !use_anchor_pos) return "non_geometry";
  if (use_attention && use_tdoa && use_anchor_pos) return "full";
  return "custom";
}

void ArchConfig::validate() const {
  if (n_anchors < 2) throw ConfigError("model.arch.n_anchors must be at least 2");
  if (conv_channels.empty()) throw ConfigError("model.arch.conv_channels must not be empty");
  if (kernel % 2 == 0) throw ConfigError("model.arch.kernel must be odd");
  if (pool < 1) throw ConfigError("model.arch.pool must be at least 1");
  std::size_t len = l_samples;
  for (std::size_t b = 0; b < conv_channels.size(); ++b) {
    if (conv_channels[b] == 0) throw ConfigError("model.arch.conv_channels entries must be positive");
    if (len % pool != 0 || len < kernel) throw ConfigError("model.arch: l_samples is not divisible through the pools");
    len /= pool;
  }
  if (feature_dim == 0 || token_dim == 0) throw ConfigError("model.arch feature/token widths must be positive");
  if (embed_dim == 0) throw ConfigError("model.arch.embed_dim must be positive");
  if (use_attention && (heads == 0 || key_dim == 0 || value_dim == 0)) {
    throw ConfigError("model.arch attention sizes must be positive");
  }
}

nlohmann::json to_json(const ArchConfig& a) {
  return {{"n_anchors", a.n_anchors},
          {"l_samples", a.l_samples},
          {"conv_channels", a.conv_channels},
          {"kernel", a.kernel},
          {"pool", a.pool},
          {"feature_dim", a.feature_dim},
          {"embed_dim", a.embed_dim},
          {"token_dim", a.token_dim},
          {"use_attention", a.use_attention},
          {"heads", a.heads},
          {"key_dim", a.key_dim},
          {"value_dim", a.value_dim},
          {"attention_mode", a.attention_mode == nn::AttentionMode::GlobalQuery ? "global_query" : "pairwise"},
          {"use_tdoa", a.use_tdoa},
          {"use_anchor_pos", a.use_anchor_pos},
          {"head_hidden", a.head_hidden}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.n_anchors = j.value("n_anchors", a.n_anchors);
    a.l_samples = j.value("l_samples", a.l_samples);
    a.conv_channels = j.value("conv_channels", a.conv_channels);
    a.kernel = j.value("kernel", a.kernel);
    a.pool = j.value("pool", a.pool);
    a.feature_dim = j.value("feature_dim", a.feature_dim);
    a.embed_dim = j.value("embed_dim", a.embed_dim);
    a.token_dim = j.value("token_dim", a.token_dim);
    a.use_attention = j.value("use_attention", a.use_attention);
    a.heads = j.value("heads", a.heads);
    a.key_dim = j.value("key_dim", a.key_dim);
    a.value_dim = j.value("value_dim", a.value_dim);
    const std::string mode = j.value("attention_mode", std::string("global_query"));
    if (mode == "global_query") {
      a.attention_mode = nn::AttentionMode::GlobalQuery;
    } else if (mode == "pairwise") {
      a.attention_mode = nn::AttentionMode::Pairwise;
    } else {
      throw ConfigError("attention_mode must be \"global_query\" or \"pairwise\"");
    }
    a.use_tdoa = j.value("use_tdoa", a.use_tdoa);
    a.use_anchor_pos = j.value("use_anchor_pos", a.use_anchor_pos);
    a.head_hidden = j.value("head_hidden", a.head_hidden);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model.arch: ") + e.what());
  }
  a.validate();
  return a;
}

LocalizerModel::LocalizerModel(ArchConfig arch, NormalizationSpec norm) : arch_(std::move(arch)), norm_(norm) {
  arch_.validate();
  if (arch_.l_samples != norm_.l_samples) throw ConfigError("model l_samples differs from the normalization spec");
  std::size_t channels = 2;
  std::size_t len = arch_.l_samples;
  for (std::size_t b = 0; b < arch_.conv_channels.size(); ++b) {
    convs_.emplace_back(layout_, "cnn.conv" + std::to_string(b), channels, arch_.conv_channels[b], arch_.kernel, len);
    channels = arch_.conv_channels[b];
    len /= arch_.pool;
  }
  cnn_dense_ = nn::Dense(layout_, "cnn.dense", channels * len, arch_.feature_dim);
  embed_ = nn::Dense(layout_, "geometry.embed", arch_.geometry_inputs(), arch_.embed_dim);
  token_ = nn::Dense(layout_, "token", arch_.feature_dim + arch_.embed_dim, arch_.token_dim);
  if (arch_.use_attention) {
    attention_ = nn::AttentionFusion(layout_, "fusion", arch_.token_dim, arch_.heads, arch_.key_dim, arch_.value_dim,
                                     arch_.attention_mode);
  }
  std::size_t width = arch_.fused_dim();
  for (std::size_t l = 0; l < arch_.head_hidden.size(); ++l) {
    head_.emplace_back(layout_, "head.dense" + std::to_string(l), width, arch_.head_hidden[l]);
    width = arch_.head_hidden[l];
  }
  head_.emplace_back(layout_, "head.out", width, 2);
}

nn::ParamStore LocalizerModel::init_params(std::uint64_t seed) const {
  nn::ParamStore params = layout_;
  nn::InitRng rng(seed);
  for (const auto& c : convs_) c.init(params, rng);
  cnn_dense_.init(params, rng);
  embed_.init(params, rng, 1.0);
  if (arch_.use_tdoa) {
    // dt arrives in sample periods (tens of units); keep the tanh out of saturation at start.
    auto& w = params.get("geometry.embed.weight");
    const std::size_t cols = arch_.geometry_inputs();
    for (std::size_t r = 0; r < arch_.embed_dim; ++r) w[r * cols + cols - 1] *= 0.05;
  }
  token_.init(params, rng);
  if (arch_.use_attention) attention_.init(params, rng);
  for (std::size_t l = 0; l + 1 < head_.size(); ++l) head_[l].init(params, rng);
  head_.back().init(params, rng, 0.1);
  return params;
}

void LocalizerModel::check_bundle(const FeatureBundle& bundle) const {
  if (bundle.anchors.size() != arch_.n_anchors) {
    throw ShapeMismatch("bundle has " + std::to_string(bundle.anchors.size()) + " anchors, model expects " +
                        std::to_string(arch_.n_anchors));
  }
  for (const auto& a : bundle.anchors) {
    if (a.cir.size() != 2 * arch_.l_samples) throw ShapeMismatch("bundle CIR tensor is not 2 x l_samples");
  }
  if (bundle.n_present() == 0) throw AllAnchorsMasked("bundle has no present anchor");
}

ModelOutput LocalizerModel::forward(const nn::ParamStore& params, const FeatureBundle& bundle) const {
  ModelWorkspace ws;
  return forward(params, bundle, ws);
}

ModelOutput LocalizerModel::forward(const nn::ParamStore& params, const FeatureBundle& bundle,
                                    ModelWorkspace& ws) const {
  check_bundle(bundle);
  const std::size_t n = arch_.n_anchors;
  const std::size_t blocks = convs_.size();
  ws.anchors.resize(n);
  ws.mask.assign(n, 0);
  ws.tokens.assign(n * arch_.token_dim, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& af = bundle.anchors[i];
    if (!af.present) continue;
    ws.mask[i] = 1;
    auto& tr = ws.anchors[i];
    tr.conv_out.resize(blocks);
    tr.pool_out.resize(blocks);
    tr.pool_idx.resize(blocks);
    std::span<const double> in = af.cir;
    for (std::size_t b = 0; b < blocks; ++b) {
      const auto& conv = convs_[b];
      tr.conv_out[b].resize(conv.out_size());
      conv.forward(params, in, tr.conv_out[b]);
      nn::relu_forward(tr.conv_out[b]);
      const std::size_t pooled = conv.out_size() / arch_.pool;
      tr.pool_out[b].resize(pooled);
      tr.pool_idx[b].resize(pooled);
      nn::maxpool1d_forward(tr.conv_out[b], conv.out_channels(), conv.length(), arch_.pool, tr.pool_out[b],
                            tr.pool_idx[b]);
      in = tr.pool_out[b];
    }
    tr.feature.resize(arch_.feature_dim);
    cnn_dense_.forward(params, in, tr.feature);
    nn::relu_forward(tr.feature);

    tr.geometry.clear();
    if (arch_.use_anchor_pos) {
      tr.geometry.push_back(af.anchor_xy.x);
      tr.geometry.push_back(af.anchor_xy.y);
    } else {
      tr.geometry.assign(n, 0.0);
      tr.geometry[i] = 1.0;
    }
    if (arch_.use_tdoa) tr.geometry.push_back(af.tdoa);
    tr.embed.resize(arch_.embed_dim);
    embed_.forward(params, tr.geometry, tr.embed);
    nn::tanh_forward(tr.embed);
    tr.token_in.assign(tr.feature.begin(), tr.feature.end());
    tr.token_in.insert(tr.token_in.end(), tr.embed.begin(), tr.embed.end());
    std::span<double> token{ws.tokens.data() + i * arch_.token_dim, arch_.token_dim};
    token_.forward(params, tr.token_in, token);
    nn::relu_forward(token);
  }

  ModelOutput out;
  ws.fused.assign(arch_.fused_dim(), 0.0);
  if (arch_.use_attention) {
    ws.weights.assign(arch_.heads * n, 0.0);
    attention_.forward(params, ws.tokens, ws.mask, ws.fused, ws.weights, ws.attention);
  } else {
    std::copy(ws.tokens.begin(), ws.tokens.end(), ws.fused.begin());
    ws.weights.assign(arch_.heads * n, 0.0);
    const double u = 1.0 / static_cast<double>(bundle.n_present());
    for (std::size_t h = 0; h < arch_.heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) ws.weights[h * n + i] = ws.mask[i] ? u : 0.0;
    }
  }

  ws.head_out.resize(head_.size());
  std::span<const double> x = ws.fused;
  for (std::size_t l = 0; l < head_.size(); ++l) {
    ws.head_out[l].resize(head_[l].out_size());
    head_[l].forward(params, x, ws.head_out[l]);
    if (l + 1 < head_.size()) nn::relu_forward(ws.head_out[l]);
    x = ws.head_out[l];
  }
  out.pred = norm_.denormalize_xy({x[0], x[1]});
  out.attention = ws.weights;
  return out;
}

double LocalizerModel::loss_and_grad(const nn::ParamStore& params, const FeatureBundle& bundle, Point2D truth,
                                     nn::ParamStore& grads, ModelWorkspace& ws) const {
  const ModelOutput out = forward(params, bundle, ws);
  const auto huber = nn::huber_loss(out.pred, truth);

  std::vector<double> g{huber.grad.x * norm_.half_width(), huber.grad.y * norm_.half_height()};
  for (std::size_t l = head_.size(); l-- > 0;) {
    std::span<const double> in = l == 0 ? std::span<const double>(ws.fused) : std::span<const double>(ws.head_out[l - 1]);
    std::vector<double> gin(in.size());
    head_[l].backward(params, in, g, gin, grads);
    if (l > 0) nn::relu_backward(ws.head_out[l - 1], gin);
    g = std::move(gin);
  }

  const std::size_t n = arch_.n_anchors;
  std::vector<double> gtokens(n * arch_.token_dim, 0.0);
  if (arch_.use_attention) {
    attention_.backward(params, ws.tokens, g, ws.attention, gtokens, grads);
  } else {
    gtokens = g;
  }

  const std::size_t blocks = convs_.size();
  std::vector<double> gtoken_in, gfeature, gembed, gpool, gconv;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ws.mask[i]) continue;
    auto& tr = ws.anchors[i];
    std::span<const double> token{ws.tokens.data() + i * arch_.token_dim, arch_.token_dim};
    std::span<double> gtok{gtokens.data() + i * arch_.token_dim, arch_.token_dim};
    nn::relu_backward(token, gtok);
    gtoken_in.assign(tr.token_in.size(), 0.0);
    token_.backward(params, tr.token_in, gtok, gtoken_in, grads);

    gfeature.assign(gtoken_in.begin(), gtoken_in.begin() + static_cast<std::ptrdiff_t>(arch_.feature_dim));
    gembed.assign(gtoken_in.begin() + static_cast<std::ptrdiff_t>(arch_.feature_dim), gtoken_in.end());
    nn::tanh_backward(tr.embed, gembed);
    embed_.backward(params, tr.geometry, gembed, {}, grads);
    nn::relu_backward(tr.feature, gfeature);
    gpool.assign(tr.pool_out[blocks - 1].size(), 0.0);
    cnn_dense_.backward(params, tr.pool_out[blocks - 1], gfeature, gpool, grads);
    for (std::size_t b = blocks; b-- > 0;) {
      gconv.assign(tr.conv_out[b].size(), 0.0);
      nn::maxpool1d_backward(gpool, tr.pool_idx[b], gconv);
      nn::relu_backward(tr.conv_out[b], gconv);
      std::span<const double> in =
          b == 0 ? std::span<const double>(bundle.anchors[i].cir) : std::span<const double>(tr.pool_out[b - 1]);
      if (b > 0) {
        gpool.assign(in.size(), 0.0);
        convs_[b].backward(params, in, gconv, gpool, grads);
      } else {
        convs_[b].backward(params, in, gconv, {}, grads);
      }
    }
  }
  return huber.loss;
}

}  // namespace secloc
