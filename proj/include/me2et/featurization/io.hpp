#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "me2et/error.hpp"
#include "me2et/featurization/patches.hpp"

// On-disk raw inputs. All integers and floats are little-endian.
//
//   image file:    "ME2I" u32 J, u32 H, u32 W, u32 C, then J*C*H*W float32,
//                  planar per image (image j, channel c, row y, column x).
//   waveform file: "ME2A" u32 sample_rate, u64 n, then n float32 samples.
namespace me2et::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace detail {

template <class U>
void put(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <class U>
U get(std::istream& in, const std::filesystem::path& path) {
  U value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw ValidationError(path.string() + ": truncated file");
  }
  return value;
}

inline void expect_magic(std::istream& in, const char* magic, const std::filesystem::path& path) {
  char buf[4] = {};
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw ValidationError(path.string() + ": bad magic, expected " + std::string(magic, 4));
  }
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace detail

template <class T>
void write_images(const std::filesystem::path& path, const feat::VisualInput<T>& in) {
  in.validate();
  auto out = detail::open_out(path);
  out.write("ME2I", 4);
  for (auto v : {in.images, in.height, in.width, in.channels}) detail::put(out, static_cast<std::uint32_t>(v));
  for (std::size_t j = 0; j < in.images; ++j)
    for (std::size_t c = 0; c < in.channels; ++c)
      for (std::size_t y = 0; y < in.height; ++y)
        for (std::size_t x = 0; x < in.width; ++x)
          detail::put(out, static_cast<float>(in.pixels[((j * in.height + y) * in.width + x) * in.channels + c]));
}

// Patch size is not stored; the caller supplies it.
template <class T>
feat::VisualInput<T> read_images(const std::filesystem::path& path, std::size_t patch) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "ME2I", path);
  feat::VisualInput<T> v;
  v.images = detail::get<std::uint32_t>(in, path);
  v.height = detail::get<std::uint32_t>(in, path);
  v.width = detail::get<std::uint32_t>(in, path);
  v.channels = detail::get<std::uint32_t>(in, path);
  v.patch = patch;
  v.pixels.resize(v.images * v.height * v.width * v.channels);
  for (std::size_t j = 0; j < v.images; ++j)
    for (std::size_t c = 0; c < v.channels; ++c)
      for (std::size_t y = 0; y < v.height; ++y)
        for (std::size_t x = 0; x < v.width; ++x)
          v.pixels[((j * v.height + y) * v.width + x) * v.channels + c] = static_cast<T>(detail::get<float>(in, path));
  v.validate();
  return v;
}

template <class T>
void write_waveform(const std::filesystem::path& path, const std::vector<T>& samples, std::uint32_t sample_rate) {
  auto out = detail::open_out(path);
  out.write("ME2A", 4);
  detail::put(out, sample_rate);
  detail::put(out, static_cast<std::uint64_t>(samples.size()));
  for (auto s : samples) detail::put(out, static_cast<float>(s));
}

template <class T>
struct Waveform {
  std::uint32_t sample_rate = 0;
  std::vector<T> samples;
};

template <class T>
Waveform<T> read_waveform(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "ME2A", path);
  Waveform<T> w;
  w.sample_rate = detail::get<std::uint32_t>(in, path);
  const auto n = detail::get<std::uint64_t>(in, path);
  w.samples.resize(n);
  for (auto& s : w.samples) s = static_cast<T>(detail::get<float>(in, path));
  return w;
}

}  // namespace me2et::io
