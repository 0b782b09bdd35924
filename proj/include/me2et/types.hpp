#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "me2et/error.hpp"
#include "me2et/numerics/tensor.hpp"

namespace me2et {

enum class Modality { visual, acoustic, textual };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::acoustic: return "acoustic";
    case Modality::textual: return "textual";
  }
  return "unknown";
}

// N x d modality tokens.
template <class T>
struct TokenSequence {
  num::Tensor<T> tokens;
  Modality modality = Modality::visual;

  std::size_t size() const { return tokens.rows(); }
  std::size_t width() const { return tokens.cols(); }
};

// [CLS]-position output of an encoder, stored as a 1 x d row.
template <class T>
struct SummaryVector {
  num::Tensor<T> values;
  Modality modality = Modality::visual;

  std::size_t size() const { return values.numel(); }
};

template <class T>
struct NamedTensor {
  std::string name;
  num::Tensor<T> tensor;
};

// Trainable parameters in a fixed registration order; the order defines the
// checkpoint layout.
template <class T>
using ParamList = std::vector<NamedTensor<T>>;

template <class T>
std::vector<num::Tensor<T>> tensors_of(const ParamList<T>& params) {
  std::vector<num::Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace me2et

namespace me2et {

// Token indices that carry a planted class signal, per modality.
struct PlantedRegions {
  std::vector<std::size_t> visual;
  std::vector<std::size_t> acoustic;
  std::vector<std::size_t> textual;
};

// Model-ready sample: patch matrices, token ids and a binary label vector.
template <class T>
struct FeaturizedSample {
  std::string id;
  num::Tensor<T> visual_patches;    // Q x patch_dim
  num::Tensor<T> acoustic_patches;  // M x patch_dim
  std::vector<std::size_t> text_ids;
  std::vector<int> label;
  PlantedRegions planted;
};

}  // namespace me2et
