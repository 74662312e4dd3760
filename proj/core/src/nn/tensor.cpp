// SPDX-License-Identifier: Apache-2.0
#include "secloc/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "secloc/errors.hpp"

namespace secloc::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) throw ShapeMismatch("tensor data length does not match its shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double canonical_sum(std::span<const double> values) {
  if (values.size() <= 1) return values.empty() ? 0.0 : values[0];
  double buf[16];
  std::vector<double> heap;
  double* sorted = buf;
  if (values.size() > 16) {
    heap.assign(values.begin(), values.end());
    sorted = heap.data();
  } else {
    std::copy(values.begin(), values.end(), buf);
  }
  std::sort(sorted, sorted + values.size());
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += sorted[i];
  return s;
}

}  // namespace secloc::nn
