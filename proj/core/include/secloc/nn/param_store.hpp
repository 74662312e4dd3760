// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "secloc/nn/tensor.hpp"

namespace secloc::nn {

/// Ordered collection of named tensors. Used for model parameters, their gradients and
/// optimizer moments, which all share one layout.
class ParamStore {
 public:
  /// Appends a tensor and returns its index. Names must be unique.
  std::size_t add(std::string name, Tensor tensor);

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const noexcept;

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& get(std::string_view name) { return tensors_[index_of(name)]; }
  const Tensor& get(std::string_view name) const { return tensors_[index_of(name)]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  /// Total number of scalar entries.
  std::size_t parameter_count() const;
  ParamStore zeros_like() const;
  void set_zero();
  /// this += other, element-wise. Throws ShapeMismatch when layouts differ.
  void accumulate(const ParamStore& other, double scale = 1.0);
  bool same_layout(const ParamStore& other) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

inline constexpr std::uint32_t kParamStoreVersion = 1;

/// Binary container: "SLPS", u32 version, u32 count, then per tensor
/// {u32 name length, name bytes, u8 dtype (1 = float64), u32 rank, u64 dims[rank], data}.
/// All integers and doubles are little-endian.
void save_param_store(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_param_store(const std::filesystem::path& path);

}  // namespace secloc::nn
