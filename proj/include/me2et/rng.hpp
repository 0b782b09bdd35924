#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "me2et/numerics/tensor.hpp"

namespace me2et {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// All randomness descends from one user seed. Each consumer names a stream
// ("params/encoder_v", "synth/train/17", ...) and gets an independent
// generator seeded with splitmix64(seed ^ splitmix64(fnv1a(stream))).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream) { return Rng(derive_seed(seed, stream)); }

template <class T>
num::Tensor<T> normal_tensor(num::Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  auto t = num::Tensor<T>::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
num::Tensor<T> uniform_tensor(num::Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  auto t = num::Tensor<T>::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace me2et
