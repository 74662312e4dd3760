// SPDX-License-Identifier: Apache-2.0
#include "secloc/nn/param_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "secloc/errors.hpp"

namespace secloc::nn {

std::size_t ParamStore::add(std::string name, Tensor tensor) {
  if (contains(name)) throw SchemaError("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(tensor));
  return tensors_.size() - 1;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw SchemaError("no parameter named " + std::string(name));
}

bool ParamStore::contains(std::string_view name) const noexcept {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  z.names_ = names_;
  z.tensors_.reserve(tensors_.size());
  for (const auto& t : tensors_) z.tensors_.emplace_back(t.shape());
  return z;
}

void ParamStore::set_zero() {
  for (auto& t : tensors_) t.fill(0.0);
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape() != other.tensors_[i].shape()) return false;
  }
  return true;
}

void ParamStore::accumulate(const ParamStore& other, double scale) {
  if (!same_layout(other)) throw ShapeMismatch("parameter stores have different layouts");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    double* dst = tensors_[i].data();
    const double* src = other.tensors_[i].data();
    const std::size_t n = tensors_[i].size();
    if (scale == 1.0) {
      for (std::size_t k = 0; k < n; ++k) dst[k] += src[k];
    } else {
      for (std::size_t k = 0; k < n; ++k) dst[k] += scale * src[k];
    }
  }
}

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'L', 'P', 'S'};
constexpr std::uint8_t kDtypeFloat64 = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError(0, path.string() + ": unexpected end of parameter file");
    bits |= static_cast<U>(static_cast<std::uint8_t>(c)) << (8 * i);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

void save_param_store(const std::filesystem::path& path, const ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kParamStoreVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& name = store.name(i);
    const auto& t = store[i];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(out, kDtypeFloat64);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (std::size_t k = 0; k < t.size(); ++k) put_le<double>(out, t[k]);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ParamStore load_param_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError(0, path.string() + ": not a parameter store");
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kParamStoreVersion) throw FormatError(0, path.string() + ": unsupported version");
  const auto count = get_le<std::uint32_t>(in, path);
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint32_t>(in, path);
    if (len > 4096) throw FormatError(0, path.string() + ": implausible tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw FormatError(0, path.string() + ": truncated tensor name");
    if (get_le<std::uint8_t>(in, path) != kDtypeFloat64) throw FormatError(0, path.string() + ": unsupported dtype");
    const auto rank = get_le<std::uint32_t>(in, path);
    if (rank > 8) throw FormatError(0, path.string() + ": implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in, path));
    const std::size_t n = shape_size(shape);
    if (n > (std::size_t{1} << 32)) throw FormatError(0, path.string() + ": implausible tensor size");
    std::vector<double> values(n);
    for (auto& v : values) v = get_le<double>(in, path);
    store.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

}  // namespace secloc::nn
