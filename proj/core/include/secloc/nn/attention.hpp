// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "secloc/nn/layers.hpp"

namespace secloc::nn {

enum class AttentionMode {
  GlobalQuery,  // one learned query per head scores every anchor
  Pairwise,     // each present anchor queries all others; an anchor's weight is its mean received attention
};

/// Multi-head attention pooling over a small set of anchor tokens.
///
/// Per head h the weights over present anchors are alpha = softmax(score(t_i)), and the head output
/// is sum_i alpha_i * (W_f^h t_i). Head outputs are concatenated into the fused vector. Absent
/// anchors get exactly zero weight. Sums run in a canonical order, so permuting the tokens
/// permutes the weights and leaves the fused vector bit-identical.
class AttentionFusion {
 public:
  AttentionFusion() = default;
  AttentionFusion(ParamStore& params, const std::string& name, std::size_t token_dim, std::size_t heads,
                  std::size_t key_dim, std::size_t value_dim, AttentionMode mode = AttentionMode::GlobalQuery);

  std::size_t token_dim() const noexcept { return token_dim_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t fused_dim() const noexcept { return heads_ * value_dim_; }
  AttentionMode mode() const noexcept { return mode_; }

  struct Cache {
    std::size_t n = 0;
    std::vector<std::uint8_t> mask;
    std::vector<double> keys;     // [n, heads, key_dim]
    std::vector<double> queries;  // pairwise: [n, heads, key_dim]
    std::vector<double> values;   // [n, heads, value_dim]
    std::vector<double> probs;    // pairwise: [heads, n(query), n(key)]
    std::vector<double> weights;  // [heads, n]
  };

  void init(ParamStore& params, InitRng& rng) const;

  /// tokens: [n, token_dim]. Writes fused [fused_dim] and weights [heads, n].
  void forward(const ParamStore& params, std::span<const double> tokens, std::span<const std::uint8_t> mask,
               std::span<double> fused, std::span<double> weights, Cache& cache) const;

  /// gtokens: [n, token_dim], overwritten. Parameter gradients accumulate into `grads`.
  void backward(const ParamStore& params, std::span<const double> tokens, std::span<const double> gfused,
                const Cache& cache, std::span<double> gtokens, ParamStore& grads) const;

 private:
  std::size_t token_dim_ = 0, heads_ = 0, key_dim_ = 0, value_dim_ = 0;
  AttentionMode mode_ = AttentionMode::GlobalQuery;
  std::size_t query_ = 0, key_proj_ = 0, value_proj_ = 0;
};

}  // namespace secloc::nn
