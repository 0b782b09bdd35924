#pragma once

// Flat little-endian checkpoint:
//   "ME2ETCKP"  u32 version  u32 count
//   count x { u32 name_len, name bytes, u32 ndim, u64 dims[ndim], float32 values[numel] }
// Tensors appear in parameter registration order. Values are stored as
// float32 regardless of the in-memory precision.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "me2et/error.hpp"
#include "me2et/types.hpp"

namespace me2et::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

inline constexpr char kMagic[8] = {'M', 'E', '2', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

template <class V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::istream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) throw ValidationError("checkpoint " + path + " is truncated");
  return v;
}

}  // namespace detail

template <class T>
void save(const std::string& path, const ParamList<T>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  detail::put<std::uint32_t>(out, kVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.shape()) detail::put<std::uint64_t>(out, d);
    for (auto v : t.data()) detail::put<float>(out, static_cast<float>(v));
  }
  if (!out) throw ValidationError("failed writing checkpoint " + path);
}

// Loads values into `params` in place. Names, order and shapes must match
// exactly; nothing is modified unless the whole file validates.
template <class T>
void load(const std::string& path, ParamList<T>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw ValidationError(path + " is not a checkpoint (bad magic)");
  }
  const auto version = detail::get<std::uint32_t>(in, path);
  if (version != kVersion) throw ValidationError("checkpoint " + path + " has unsupported version " + std::to_string(version));
  const auto count = detail::get<std::uint32_t>(in, path);
  if (count != params.size()) {
    throw ValidationError("checkpoint " + path + " holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  std::vector<std::vector<T>> values(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(in, path);
    if (len > 4096) throw ValidationError("checkpoint " + path + " has a corrupt tensor name");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ValidationError("checkpoint " + path + " is truncated");
    if (name != params[i].name) {
      throw ValidationError("checkpoint tensor " + std::to_string(i) + " is '" + name + "', model expects '" + params[i].name + "'");
    }
    const auto ndim = detail::get<std::uint32_t>(in, path);
    num::Shape shape;
    for (std::uint32_t k = 0; k < ndim && k < 8; ++k) shape.push_back(detail::get<std::uint64_t>(in, path));
    if (shape != params[i].tensor.shape()) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + num::shape_to_string(shape) + ", model expects " +
                            num::shape_to_string(params[i].tensor.shape()));
    }
    values[i].resize(params[i].tensor.numel());
    for (auto& v : values[i]) v = static_cast<T>(detail::get<float>(in, path));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("checkpoint " + path + " has trailing bytes");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace me2et::ckpt
