#pragma once

#include <span>
#include <string>

#include "me2et/numerics/ops.hpp"
#include "me2et/rng.hpp"
#include "me2et/types.hpp"

namespace me2et::feat {

// Linear patch-to-token projection.
template <class T>
struct PatchEmbedParams {
  num::Tensor<T> projection;  // patch_dim x d
  num::Tensor<T> bias;        // d

  static PatchEmbedParams init(std::size_t patch_dim, std::size_t d, Rng& rng) {
    return {normal_tensor<T>({patch_dim, d}, 0.02, rng).set_requires_grad(),
            num::Tensor<T>::zeros({d}).set_requires_grad()};
  }

  std::size_t patch_dim() const { return projection.rows(); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".projection", projection});
    out.push_back({prefix + ".bias", bias});
  }
};

template <class T>
TokenSequence<T> embed_patches(const num::Tensor<T>& patches, const PatchEmbedParams<T>& params, Modality modality) {
  if (patches.dim() != 2 || patches.cols() != params.patch_dim()) {
    throw ValidationError("embed_patches: patches " + num::shape_to_string(patches.shape()) +
                          " do not match projection " + num::shape_to_string(params.projection.shape()));
  }
  return {num::add_bias(num::matmul(patches, params.projection), params.bias), modality};
}

// Token, position and segment tables for the text encoder. Every sequence is a
// single segment, so only segment row 0 is used.
template <class T>
struct TextEmbedParams {
  num::Tensor<T> token_table;     // V x d
  num::Tensor<T> position_table;  // max_len x d
  num::Tensor<T> segment_table;   // 2 x d

  static TextEmbedParams init(std::size_t vocab, std::size_t max_len, std::size_t d, Rng& rng) {
    return {normal_tensor<T>({vocab, d}, 0.02, rng).set_requires_grad(),
            normal_tensor<T>({max_len, d}, 0.02, rng).set_requires_grad(),
            normal_tensor<T>({2, d}, 0.02, rng).set_requires_grad()};
  }

  std::size_t vocab() const { return token_table.rows(); }
  std::size_t max_len() const { return position_table.rows(); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".token_table", token_table});
    out.push_back({prefix + ".position_table", position_table});
    out.push_back({prefix + ".segment_table", segment_table});
  }
};

template <class T>
TokenSequence<T> embed_text(std::span<const std::size_t> ids, const TextEmbedParams<T>& params) {
  if (ids.empty()) throw ValidationError("embed_text: empty token sequence");
  if (ids.size() > params.max_len()) {
    throw ValidationError("embed_text: " + std::to_string(ids.size()) + " tokens exceed max length " +
                          std::to_string(params.max_len()));
  }
  for (auto id : ids) {
    if (id >= params.vocab()) {
      throw ValidationError("embed_text: token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(params.vocab()));
    }
  }
  const std::size_t n = ids.size();
  auto tokens = num::gather_rows(params.token_table, ids);
  auto positions = num::slice_rows(params.position_table, 0, n);
  auto segment = num::repeat_rows(num::slice_rows(params.segment_table, 0, 1), n);
  return {num::add(num::add(tokens, positions), segment), Modality::textual};
}

}  // namespace me2et::feat
