#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "me2et/numerics/ops.hpp"
#include "me2et/rng.hpp"
#include "me2et/types.hpp"

namespace me2et {

struct TransformerConfig {
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t head_dim = 8;
  std::size_t layers = 2;
  std::size_t ffn_mult = 4;
  std::size_t max_tokens = 64;

  static TransformerConfig paper_scale() { return {768, 12, 64, 12, 4, 576}; }
  static TransformerConfig desk_scale() { return {32, 4, 8, 2, 4, 64}; }

  void validate() const {
    if (d == 0 || heads == 0 || head_dim == 0) throw ValidationError("transformer: d, heads and head_dim must be positive");
    if (heads * head_dim != d) {
      throw ValidationError("transformer: heads * head_dim = " + std::to_string(heads * head_dim) + " differs from d = " +
                            std::to_string(d));
    }
    if (ffn_mult != 4) throw ValidationError("transformer: ffn_mult is fixed at 4");
    if (max_tokens == 0) throw ValidationError("transformer: max_tokens must be positive");
  }
};

template <class T>
struct LayerParams {
  num::Tensor<T> w_qkv;  // d x 3d: [queries | keys | values], head h owns columns h*d_h .. (h+1)*d_h of each block
  num::Tensor<T> w_msa;  // d x d
  num::Tensor<T> w1;     // d x 4d
  num::Tensor<T> b1;     // 4d
  num::Tensor<T> w2;     // 4d x d
  num::Tensor<T> b2;     // d
  num::Tensor<T> ln1_gamma, ln1_beta;
  num::Tensor<T> ln2_gamma, ln2_beta;

  static LayerParams init(const TransformerConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.d, h = cfg.ffn_mult * cfg.d;
    LayerParams p;
    p.w_qkv = normal_tensor<T>({d, 3 * d}, 0.02, rng).set_requires_grad();
    p.w_msa = normal_tensor<T>({d, d}, 0.02, rng).set_requires_grad();
    p.w1 = normal_tensor<T>({d, h}, 0.02, rng).set_requires_grad();
    p.b1 = num::Tensor<T>::zeros({h}).set_requires_grad();
    p.w2 = normal_tensor<T>({h, d}, 0.02, rng).set_requires_grad();
    p.b2 = num::Tensor<T>::zeros({d}).set_requires_grad();
    p.ln1_gamma = num::Tensor<T>::filled({d}, T(1)).set_requires_grad();
    p.ln1_beta = num::Tensor<T>::zeros({d}).set_requires_grad();
    p.ln2_gamma = num::Tensor<T>::filled({d}, T(1)).set_requires_grad();
    p.ln2_beta = num::Tensor<T>::zeros({d}).set_requires_grad();
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w_qkv", w_qkv});
    out.push_back({prefix + ".w_msa", w_msa});
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".b1", b1});
    out.push_back({prefix + ".w2", w2});
    out.push_back({prefix + ".b2", b2});
    out.push_back({prefix + ".ln1_gamma", ln1_gamma});
    out.push_back({prefix + ".ln1_beta", ln1_beta});
    out.push_back({prefix + ".ln2_gamma", ln2_gamma});
    out.push_back({prefix + ".ln2_beta", ln2_beta});
  }
};

template <class T>
struct EncoderParams {
  TransformerConfig config;
  std::vector<LayerParams<T>> layers;
  num::Tensor<T> cls;        // 1 x d
  num::Tensor<T> positions;  // (max_tokens + 1) x d, row 0 belongs to [CLS]

  static EncoderParams init(const TransformerConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    p.config = cfg;
    for (std::size_t l = 0; l < cfg.layers; ++l) p.layers.push_back(LayerParams<T>::init(cfg, rng));
    p.cls = normal_tensor<T>({1, cfg.d}, 0.02, rng).set_requires_grad();
    p.positions = normal_tensor<T>({cfg.max_tokens + 1, cfg.d}, 0.02, rng).set_requires_grad();
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, prefix + ".layer" + std::to_string(l));
    out.push_back({prefix + ".cls", cls});
    out.push_back({prefix + ".positions", positions});
  }
};

// Multi-head scaled dot-product self-attention followed by the output projection.
template <class T>
num::Tensor<T> msa(const num::Tensor<T>& x, const LayerParams<T>& p, const TransformerConfig& cfg) {
  const std::size_t d = cfg.d, dh = cfg.head_dim;
  const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));
  auto qkv = num::matmul(x, p.w_qkv);
  std::vector<num::Tensor<T>> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    auto q = num::slice_cols(qkv, h * dh, dh);
    auto k = num::slice_cols(qkv, d + h * dh, dh);
    auto v = num::slice_cols(qkv, 2 * d + h * dh, dh);
    auto scores = num::scale(num::matmul(q, num::transpose(k)), inv_sqrt_dh);
    heads.push_back(num::matmul(num::softmax(scores, 1), v));
  }
  return num::matmul(num::concat_cols(heads), p.w_msa);
}

template <class T>
num::Tensor<T> ffn(const num::Tensor<T>& z, const LayerParams<T>& p) {
  auto hidden = num::gelu(num::add_bias(num::matmul(z, p.w1), p.b1));
  return num::add_bias(num::matmul(hidden, p.w2), p.b2);
}

template <class T>
struct EncodeResult {
  SummaryVector<T> summary;
  num::Tensor<T> states;  // (N+1) x d
};

// Prepends [CLS], adds positions 0..N, then runs the pre-LN residual stack
//   z' = MSA(LN(z)) + z ;  z = FFN(LN(z')) + z'
// with no trailing LayerNorm. The summary is the final [CLS] row.
template <class T>
EncodeResult<T> encode(const TokenSequence<T>& tokens, const EncoderParams<T>& params) {
  const auto& cfg = params.config;
  const std::size_t n = tokens.size();
  if (n == 0) throw ValidationError("encode: empty " + std::string(to_string(tokens.modality)) + " token sequence");
  if (n > cfg.max_tokens) {
    throw ValidationError("encode: " + std::to_string(n) + " " + std::string(to_string(tokens.modality)) +
                          " tokens exceed max_tokens = " + std::to_string(cfg.max_tokens));
  }
  if (tokens.width() != cfg.d) {
    throw ValidationError("encode: token width " + std::to_string(tokens.width()) + " differs from d = " +
                          std::to_string(cfg.d));
  }
  auto z = num::add(num::concat_rows<T>({params.cls, tokens.tokens}), num::slice_rows(params.positions, 0, n + 1));
  for (const auto& layer : params.layers) {
    auto attended = num::add(msa(num::layer_norm(z, layer.ln1_gamma, layer.ln1_beta), layer, cfg), z);
    z = num::add(ffn(num::layer_norm(attended, layer.ln2_gamma, layer.ln2_beta), layer), attended);
  }
  return {SummaryVector<T>{num::slice_rows(z, 0, 1), tokens.modality}, z};
}

}  // namespace me2et
