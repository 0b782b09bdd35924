#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "me2et/error.hpp"
#include "me2et/numerics/tensor.hpp"

namespace me2et::feat {

// J images of H x W x C pixels, stored image-major then row-major with
// interleaved channels (index ((j*H + y)*W + x)*C + c). Pixels lie in [0,1].
template <class T>
struct VisualInput {
  std::size_t images = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::size_t patch = 16;
  std::vector<T> pixels;

  std::size_t patches_per_image() const { return (height / patch) * (width / patch); }
  std::size_t patch_count() const { return images * patches_per_image(); }
  std::size_t patch_dim() const { return patch * patch * channels; }

  void validate() const {
    if (channels != 1 && channels != 3) throw ValidationError("visual input: channels must be 1 or 3, got " + std::to_string(channels));
    if (patch == 0 || height == 0 || width == 0 || images == 0) throw ValidationError("visual input: empty geometry");
    if (height % patch != 0 || width % patch != 0) {
      throw ValidationError("visual input: " + std::to_string(height) + "x" + std::to_string(width) +
                            " image is not divisible by patch size " + std::to_string(patch));
    }
    if (pixels.size() != images * height * width * channels) {
      throw ValidationError("visual input: pixel buffer holds " + std::to_string(pixels.size()) + " values, expected " +
                            std::to_string(images * height * width * channels));
    }
  }
};

// F x T log-Mel energies, bin-major (index f*T + t).
template <class T>
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  double frame_hop_s = 0.01;
  std::vector<T> values;

  T at(std::size_t f, std::size_t t) const { return values[f * frames + t]; }
};

enum class AcousticPatchMode { temporal, square };

inline constexpr std::size_t kSquarePatch = 16;

// Patch k of image j, grid cell (r, c), is row j*ppi + r*(W/P) + c. Inside a
// patch, values follow (row, column, channel) order.
template <class T>
num::Tensor<T> split_image_patches(const VisualInput<T>& in) {
  in.validate();
  const std::size_t P = in.patch, C = in.channels, gw = in.width / P, gh = in.height / P;
  const std::size_t dim = in.patch_dim();
  std::vector<T> out(in.patch_count() * dim);
  std::size_t row = 0;
  for (std::size_t j = 0; j < in.images; ++j) {
    for (std::size_t r = 0; r < gh; ++r) {
      for (std::size_t c = 0; c < gw; ++c, ++row) {
        T* dst = out.data() + row * dim;
        for (std::size_t y = 0; y < P; ++y) {
          const std::size_t src = ((j * in.height + r * P + y) * in.width + c * P) * C;
          for (std::size_t k = 0; k < P * C; ++k) dst[y * P * C + k] = in.pixels[src + k];
        }
      }
    }
  }
  return num::Tensor<T>::from({in.patch_count(), dim}, std::move(out));
}

// Inverse of split_image_patches for the given geometry.
template <class T>
std::vector<T> reassemble_image_patches(const num::Tensor<T>& patches, const VisualInput<T>& geometry) {
  const std::size_t P = geometry.patch, C = geometry.channels, gw = geometry.width / P, gh = geometry.height / P;
  const std::size_t dim = geometry.patch_dim();
  if (patches.rows() != geometry.patch_count() || patches.cols() != dim) {
    throw ValidationError("reassemble: patch matrix " + num::shape_to_string(patches.shape()) + " does not match geometry");
  }
  std::vector<T> pixels(geometry.images * geometry.height * geometry.width * C);
  std::size_t row = 0;
  for (std::size_t j = 0; j < geometry.images; ++j)
    for (std::size_t r = 0; r < gh; ++r)
      for (std::size_t c = 0; c < gw; ++c, ++row)
        for (std::size_t y = 0; y < P; ++y) {
          const std::size_t dst = ((j * geometry.height + r * P + y) * geometry.width + c * P) * C;
          for (std::size_t k = 0; k < P * C; ++k) pixels[dst + k] = patches.data()[row * dim + y * P * C + k];
        }
  return pixels;
}

inline std::size_t acoustic_patch_count(std::size_t bins, std::size_t frames, AcousticPatchMode mode) {
  if (mode == AcousticPatchMode::temporal) return frames / 2;
  return (bins / kSquarePatch) * (frames / kSquarePatch);
}

inline std::size_t acoustic_patch_dim(std::size_t bins, AcousticPatchMode mode) {
  return mode == AcousticPatchMode::temporal ? bins * 2 : kSquarePatch * kSquarePatch;
}

// Temporal mode: patch i covers frames 2i and 2i+1 over all bins, values in
// (bin, frame) order; a trailing odd frame is dropped. Square mode: 16 x 16
// tiles, time block outermost, frequency block inner.
template <class T>
num::Tensor<T> split_spectrogram_patches(const Spectrogram<T>& spec, AcousticPatchMode mode,
                                         std::size_t expected_bins = 0) {
  const std::size_t F = spec.bins, Tn = spec.frames;
  if (spec.values.size() != F * Tn) throw ValidationError("spectrogram: value buffer does not match F x T");
  if (mode == AcousticPatchMode::temporal) {
    if (expected_bins != 0 && F != expected_bins) {
      throw ValidationError("spectrogram: " + std::to_string(F) + " mel bins, configuration expects " +
                            std::to_string(expected_bins));
    }
    if (Tn < 2) throw ValidationError("spectrogram: " + std::to_string(Tn) + " frames is shorter than a 2-frame patch");
    const std::size_t M = Tn / 2, dim = F * 2;
    std::vector<T> out(M * dim);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t dt = 0; dt < 2; ++dt) out[i * dim + f * 2 + dt] = spec.at(f, 2 * i + dt);
    return num::Tensor<T>::from({M, dim}, std::move(out));
  }
  if (F % kSquarePatch != 0) {
    throw ValidationError("spectrogram: " + std::to_string(F) + " mel bins is not a multiple of 16");
  }
  if (Tn < kSquarePatch) {
    throw ValidationError("spectrogram: " + std::to_string(Tn) + " frames is shorter than a 16-frame patch");
  }
  const std::size_t fb = F / kSquarePatch, tb = Tn / kSquarePatch, dim = kSquarePatch * kSquarePatch;
  std::vector<T> out(fb * tb * dim);
  std::size_t row = 0;
  for (std::size_t t = 0; t < tb; ++t)
    for (std::size_t f = 0; f < fb; ++f, ++row)
      for (std::size_t y = 0; y < kSquarePatch; ++y)
        for (std::size_t x = 0; x < kSquarePatch; ++x)
          out[row * dim + y * kSquarePatch + x] = spec.at(f * kSquarePatch + y, t * kSquarePatch + x);
  return num::Tensor<T>::from({fb * tb, dim}, std::move(out));
}

}  // namespace me2et::feat
