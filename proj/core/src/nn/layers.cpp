// SPDX-License-Identifier: Apache-2.0
#include "secloc/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "secloc/errors.hpp"

namespace secloc::nn {

namespace {

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(want) + " values, got " + std::to_string(got));
  }
}

// Eight independent partial sums combined in a fixed order; deterministic and free of the add-latency chain.
double dot(const double* a, const double* b, std::size_t n) {
  double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) s[j] += a[i + j] * b[i + j];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7])) + tail;
}

double sum(const double* a, std::size_t n) {
  double s[4] = {0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) s[j] += a[i + j];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i];
  return (s[0] + s[1]) + (s[2] + s[3]) + tail;
}

void uniform_init(Tensor& t, InitRng& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
}

}  // namespace

Conv1d::Conv1d(ParamStore& params, const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
               std::size_t length)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), length_(length) {
  if (kernel % 2 == 0) throw ShapeMismatch("conv1d kernel must be odd for same padding");
  if (kernel > length) throw ShapeMismatch("conv1d kernel longer than its input");
  w_ = params.add(name + ".weight", Tensor({out_ch, in_ch, kernel}));
  b_ = params.add(name + ".bias", Tensor({out_ch}));
}

void Conv1d::init(ParamStore& params, InitRng& rng) const {
  uniform_init(params[w_], rng, std::sqrt(6.0 / static_cast<double>(in_ch_ * kernel_)));
  params[b_].fill(0.0);
}

void Conv1d::forward(const ParamStore& params, std::span<const double> in, std::span<double> out) const {
  check_size(in.size(), in_size(), "conv1d input");
  check_size(out.size(), out_size(), "conv1d output");
  const double* w = params[w_].data();
  const double* b = params[b_].data();
  const auto L = static_cast<std::ptrdiff_t>(length_);
  const auto pad = static_cast<std::ptrdiff_t>(kernel_ / 2);
  for (std::size_t o = 0; o < out_ch_; ++o) {
    double* dst = out.data() + o * length_;
    std::fill(dst, dst + length_, b[o]);
    for (std::size_t c = 0; c < in_ch_; ++c) {
      const double* src = in.data() + c * length_;
      const double* wk = w + (o * in_ch_ + c) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const double wv = wk[k];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - shift);
        const double* s = src + shift;
        for (std::ptrdiff_t t = t0; t < t1; ++t) dst[t] += wv * s[t];
      }
    }
  }
}

void Conv1d::backward(const ParamStore& params, std::span<const double> in, std::span<const double> gout,
                      std::span<double> gin, ParamStore& grads) const {
  check_size(in.size(), in_size(), "conv1d input");
  check_size(gout.size(), out_size(), "conv1d output gradient");
  if (!gin.empty()) check_size(gin.size(), in_size(), "conv1d input gradient");
  const double* w = params[w_].data();
  double* gw = grads[w_].data();
  double* gb = grads[b_].data();
  const auto L = static_cast<std::ptrdiff_t>(length_);
  const auto pad = static_cast<std::ptrdiff_t>(kernel_ / 2);
  if (!gin.empty()) std::fill(gin.begin(), gin.end(), 0.0);
  for (std::size_t o = 0; o < out_ch_; ++o) {
    const double* go = gout.data() + o * length_;
    gb[o] += sum(go, length_);
    for (std::size_t c = 0; c < in_ch_; ++c) {
      const double* src = in.data() + c * length_;
      double* gsrc = gin.empty() ? nullptr : gin.data() + c * length_;
      const std::size_t widx = (o * in_ch_ + c) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - shift);
        const double* s = src + shift;
        gw[widx + k] += dot(go + t0, s + t0, static_cast<std::size_t>(t1 - t0));
        if (gsrc != nullptr) {
          const double wv = w[widx + k];
          double* gs = gsrc + shift;
          for (std::ptrdiff_t t = t0; t < t1; ++t) gs[t] += wv * go[t];
        }
      }
    }
  }
}

Dense::Dense(ParamStore& params, const std::string& name, std::size_t in, std::size_t out) : in_(in), out_(out) {
  w_ = params.add(name + ".weight", Tensor({out, in}));
  b_ = params.add(name + ".bias", Tensor({out}));
}

void Dense::init(ParamStore& params, InitRng& rng, double gain) const {
  uniform_init(params[w_], rng, std::sqrt(3.0 * gain / static_cast<double>(in_)));
  params[b_].fill(0.0);
}

void Dense::forward(const ParamStore& params, std::span<const double> in, std::span<double> out) const {
  check_size(in.size(), in_, "dense input");
  check_size(out.size(), out_, "dense output");
  const double* w = params[w_].data();
  const double* b = params[b_].data();
  for (std::size_t o = 0; o < out_; ++o) {
    out[o] = dot(w + o * in_, in.data(), in_) + b[o];
  }
}

void Dense::backward(const ParamStore& params, std::span<const double> in, std::span<const double> gout,
                     std::span<double> gin, ParamStore& grads) const {
  check_size(in.size(), in_, "dense input");
  check_size(gout.size(), out_, "dense output gradient");
  if (!gin.empty()) {
    check_size(gin.size(), in_, "dense input gradient");
    std::fill(gin.begin(), gin.end(), 0.0);
  }
  const double* w = params[w_].data();
  double* gw = grads[w_].data();
  double* gb = grads[b_].data();
  for (std::size_t o = 0; o < out_; ++o) {
    const double g = gout[o];
    if (g == 0.0) continue;
    gb[o] += g;
    double* grow = gw + o * in_;
    for (std::size_t i = 0; i < in_; ++i) grow[i] += g * in[i];
    if (!gin.empty()) {
      const double* row = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) gin[i] += g * row[i];
    }
  }
}

void maxpool1d_forward(std::span<const double> in, std::size_t channels, std::size_t length, std::size_t factor,
                       std::span<double> out, std::span<std::size_t> argmax) {
  if (factor == 0 || length % factor != 0) throw ShapeMismatch("pool factor must divide the length");
  const std::size_t out_len = length / factor;
  check_size(in.size(), channels * length, "maxpool input");
  check_size(out.size(), channels * out_len, "maxpool output");
  check_size(argmax.size(), channels * out_len, "maxpool argmax");
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = c * length + t * factor;
      for (std::size_t j = 1; j < factor; ++j) {
        const std::size_t idx = c * length + t * factor + j;
        if (in[idx] > in[best]) best = idx;
      }
      out[c * out_len + t] = in[best];
      argmax[c * out_len + t] = best;
    }
  }
}

void maxpool1d_backward(std::span<const double> gout, std::span<const std::size_t> argmax, std::span<double> gin) {
  check_size(argmax.size(), gout.size(), "maxpool argmax");
  std::fill(gin.begin(), gin.end(), 0.0);
  for (std::size_t i = 0; i < gout.size(); ++i) gin[argmax[i]] += gout[i];
}

void relu_forward(std::span<double> x) {
  for (auto& v : x) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> out, std::span<double> g) {
  check_size(g.size(), out.size(), "relu gradient");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(out[i] > 0.0)) g[i] = 0.0;
  }
}

void tanh_forward(std::span<double> x) {
  for (auto& v : x) v = std::tanh(v);
}

void tanh_backward(std::span<const double> out, std::span<double> g) {
  check_size(g.size(), out.size(), "tanh gradient");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - out[i] * out[i];
}

void masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask, std::span<double> weights) {
  const std::size_t n = logits.size();
  check_size(mask.size(), n, "softmax mask");
  check_size(weights.size(), n, "softmax weights");
  constexpr double kMasked = -std::numeric_limits<double>::infinity();
  double top = kMasked;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) top = std::max(top, logits[i]);
  }
  if (top == kMasked) throw AllAnchorsMasked("softmax over an all-masked set");
  double exps[64];
  std::vector<double> heap;
  double* e = exps;
  if (n > 64) {
    heap.resize(n);
    e = heap.data();
  }
  for (std::size_t i = 0; i < n; ++i) e[i] = std::exp((mask[i] ? logits[i] : kMasked) - top);
  const double z = canonical_sum({e, n});
  for (std::size_t i = 0; i < n; ++i) weights[i] = e[i] / z;
}

void masked_softmax_backward(std::span<const double> weights, std::span<const double> gweights,
                             std::span<const std::uint8_t> mask, std::span<double> glogits) {
  const std::size_t n = weights.size();
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) dot += weights[i] * gweights[i];
  }
  for (std::size_t i = 0; i < n; ++i) glogits[i] = mask[i] ? weights[i] * (gweights[i] - dot) : 0.0;
}

}  // namespace secloc::nn
