// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "secloc/nn/param_store.hpp"

namespace secloc::nn {

using InitRng = std::mt19937_64;

/// 1D cross-correlation with bias, stride 1 and zero "same" padding.
/// Input and output are channel-major [channels x length]. Weights are [out, in, kernel].
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore& params, const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
         std::size_t length);

  std::size_t in_size() const noexcept { return in_ch_ * length_; }
  std::size_t out_size() const noexcept { return out_ch_ * length_; }
  std::size_t out_channels() const noexcept { return out_ch_; }
  std::size_t length() const noexcept { return length_; }

  void init(ParamStore& params, InitRng& rng) const;
  void forward(const ParamStore& params, std::span<const double> in, std::span<double> out) const;
  /// Accumulates parameter gradients into `grads`; writes the input gradient when `gin` is non-empty.
  void backward(const ParamStore& params, std::span<const double> in, std::span<const double> gout,
                std::span<double> gin, ParamStore& grads) const;

 private:
  std::size_t in_ch_ = 0, out_ch_ = 0, kernel_ = 0, length_ = 0;
  std::size_t w_ = 0, b_ = 0;
};

/// Fully connected layer, W is [out, in].
class Dense {
 public:
  Dense() = default;
  Dense(ParamStore& params, const std::string& name, std::size_t in, std::size_t out);

  std::size_t in_size() const noexcept { return in_; }
  std::size_t out_size() const noexcept { return out_; }

  void init(ParamStore& params, InitRng& rng, double gain = 2.0) const;
  void forward(const ParamStore& params, std::span<const double> in, std::span<double> out) const;
  void backward(const ParamStore& params, std::span<const double> in, std::span<const double> gout,
                std::span<double> gin, ParamStore& grads) const;

 private:
  std::size_t in_ = 0, out_ = 0;
  std::size_t w_ = 0, b_ = 0;
};

/// Non-overlapping max pooling by `factor` along the length axis of [channels x length].
void maxpool1d_forward(std::span<const double> in, std::size_t channels, std::size_t length, std::size_t factor,
                       std::span<double> out, std::span<std::size_t> argmax);
void maxpool1d_backward(std::span<const double> gout, std::span<const std::size_t> argmax, std::span<double> gin);

void relu_forward(std::span<double> x);
/// Zeroes gradient entries where the forward output was not positive.
void relu_backward(std::span<const double> out, std::span<double> g);

void tanh_forward(std::span<double> x);
void tanh_backward(std::span<const double> out, std::span<double> g);

/// Softmax over entries with mask[i] true; masked logits are treated as -inf and get exactly 0.
/// Throws AllAnchorsMasked when nothing is present.
void masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask, std::span<double> weights);
/// Given dL/dweights, returns dL/dlogits (zero on masked entries).
void masked_softmax_backward(std::span<const double> weights, std::span<const double> gweights,
                             std::span<const std::uint8_t> mask, std::span<double> glogits);

}  // namespace secloc::nn
