#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "me2et/encoder.hpp"
#include "me2et/numerics/ops.hpp"
#include "me2et/rng.hpp"
#include "me2et/types.hpp"

namespace me2et {

enum class Pass { visual_pass1, acoustic, visual_pass2 };

inline std::string_view to_string(Pass p) {
  switch (p) {
    case Pass::visual_pass1: return "visual_pass1";
    case Pass::acoustic: return "acoustic";
    case Pass::visual_pass2: return "visual_pass2";
  }
  return "unknown";
}

// How a context vector joins the tokens before scoring.
//   concat: [t ; c 1^T]     the context adds the same offset to every token's
//                           score in a column, so the token-axis softmax cancels it.
//   gate:   [t ; t * c 1^T] elementwise, so the context reweights token features
//                           and does change the map.
enum class ContextMode { gate, concat };

// Learned scoring of context-augmented tokens into K attention columns.
template <class T>
struct PoolParams {
  num::Tensor<T> w;  // (1 + contexts) * d x K
  num::Tensor<T> b;  // K
  std::size_t contexts = 1;
  ContextMode mode = ContextMode::gate;

  static PoolParams init(std::size_t d, std::size_t k, std::size_t contexts, Rng& rng,
                         ContextMode mode = ContextMode::gate) {
    if (k == 0) throw ValidationError("pool: K must be at least 1");
    if (contexts != 1 && contexts != 2) throw ValidationError("pool: context count must be 1 or 2");
    return {normal_tensor<T>({(1 + contexts) * d, k}, 0.02, rng).set_requires_grad(),
            num::Tensor<T>::zeros({k}).set_requires_grad(), contexts, mode};
  }

  std::size_t tokens_out() const { return w.cols(); }
  std::size_t width() const { return w.rows() / (1 + contexts); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

// K x N pooling weights; row k is the distribution of pooled token k over the inputs.
template <class T>
struct AttentionMap {
  num::Tensor<T> weights;
  Modality modality = Modality::visual;
  Pass pass = Pass::visual_pass1;
};

template <class T>
struct PoolResult {
  num::Tensor<T> pooled;  // K x d
  AttentionMap<T> map;
};

// scores = [tokens ; per-context features] W + b  (N x K), normalised over the
// N tokens of each column; pooled = scores^T tokens. Every pooled token is a
// convex combination of the inputs.
template <class T>
PoolResult<T> attend_pool(const TokenSequence<T>& tokens, std::span<const SummaryVector<T>> contexts,
                          const PoolParams<T>& params, Pass pass) {
  const std::size_t n = tokens.size(), d = tokens.width();
  if (n == 0) throw ValidationError("attend_pool: empty token sequence");
  if (contexts.size() != params.contexts) {
    throw ValidationError("attend_pool: expected " + std::to_string(params.contexts) + " context vectors, got " +
                          std::to_string(contexts.size()));
  }
  if (params.w.rows() != (1 + params.contexts) * d) {
    throw ValidationError("attend_pool: token width " + std::to_string(d) + " does not match pool weights " +
                          num::shape_to_string(params.w.shape()));
  }
  std::vector<num::Tensor<T>> parts{tokens.tokens};
  for (const auto& c : contexts) {
    if (c.size() != d) {
      throw ValidationError("attend_pool: context vector of length " + std::to_string(c.size()) + " differs from d = " +
                            std::to_string(d));
    }
    parts.push_back(params.mode == ContextMode::gate ? num::mul_row(tokens.tokens, c.values)
                                                     : num::repeat_rows(c.values, n));
  }
  auto scores = num::add_bias(num::matmul(num::concat_cols(parts), params.w), params.b);
  auto weights = num::transpose(num::softmax(scores, 0));
  return {num::matmul(weights, tokens.tokens), {weights, tokens.modality, pass}};
}

enum class Variant { full, no_two_pass, no_attention, no_feature_fusion };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_two_pass: return "no_two_pass";
    case Variant::no_attention: return "no_attention";
    case Variant::no_feature_fusion: return "no_feature_fusion";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::full;
  if (name == "no_two_pass") return Variant::no_two_pass;
  if (name == "no_attention") return Variant::no_attention;
  if (name == "no_feature_fusion") return Variant::no_feature_fusion;
  throw ValidationError("unknown variant '" + std::string(name) +
                        "' (expected full, no_two_pass, no_attention or no_feature_fusion)");
}

// How a variant wires the modules together.
struct Wiring {
  bool pools = true;           // pool raw tokens down to K before the visual/acoustic encoders
  bool second_pass = true;     // refine the visual summary with acoustic context
  bool feature_fusion = true;  // include p_fusion in the decision layer
};

inline Wiring ablation_variant(Variant v) {
  switch (v) {
    case Variant::full: return {};
    case Variant::no_two_pass: return {true, false, true};
    case Variant::no_attention: return {false, false, true};
    case Variant::no_feature_fusion: return {true, true, false};
  }
  throw ValidationError("unknown variant");
}

inline Wiring ablation_variant(std::string_view name) { return ablation_variant(parse_variant(name)); }

// Encoders and pools of the tri-modal core. The visual encoder is one
// parameter set used for both visual passes.
template <class T>
struct TriModalParams {
  Wiring wiring;
  EncoderParams<T> text_encoder;
  EncoderParams<T> visual_encoder;
  EncoderParams<T> acoustic_encoder;
  std::optional<PoolParams<T>> visual_pool;   // text context
  std::optional<PoolParams<T>> acoustic_pool;  // preliminary visual + text context
  std::optional<PoolParams<T>> refine_pool;    // acoustic + text context, own weights

  void collect(ParamList<T>& out) const {
    text_encoder.collect(out, "text_encoder");
    visual_encoder.collect(out, "visual_encoder");
    acoustic_encoder.collect(out, "acoustic_encoder");
    if (visual_pool) visual_pool->collect(out, "visual_pool");
    if (acoustic_pool) acoustic_pool->collect(out, "acoustic_pool");
    if (refine_pool) refine_pool->collect(out, "refine_pool");
  }
};

template <class T>
struct TriModalState {
  SummaryVector<T> v_l;
  SummaryVector<T> v_one;
  SummaryVector<T> a;
  SummaryVector<T> v;
  num::Tensor<T> z_v, z_a, z_v_hat;  // undefined when the variant skips that pool
  std::vector<AttentionMap<T>> maps;
};

// Two-pass tri-modal forward:
//   v_l   = Transformer_l(text)
//   v_one = Transformer_v(pool(t_v | v_l))
//   a     = Transformer_a(pool(t_a | v_one, v_l))
//   v     = Transformer_v(pool'(t_v | a, v_l))
template <class T>
TriModalState<T> forward(const TokenSequence<T>& visual, const TokenSequence<T>& acoustic,
                         const TokenSequence<T>& textual, const TriModalParams<T>& params) {
  if (visual.size() == 0 || acoustic.size() == 0 || textual.size() == 0) {
    throw ValidationError("forward: every modality needs at least one token");
  }
  TriModalState<T> s;
  s.v_l = encode(textual, params.text_encoder).summary;
  if (!params.wiring.pools) {
    s.v_one = encode(visual, params.visual_encoder).summary;
    s.a = encode(acoustic, params.acoustic_encoder).summary;
    s.v = s.v_one;
    return s;
  }
  {
    SummaryVector<T> ctx[] = {s.v_l};
    auto pooled = attend_pool<T>(visual, ctx, *params.visual_pool, Pass::visual_pass1);
    s.z_v = pooled.pooled;
    s.maps.push_back(pooled.map);
    s.v_one = encode(TokenSequence<T>{s.z_v, Modality::visual}, params.visual_encoder).summary;
  }
  {
    SummaryVector<T> ctx[] = {s.v_one, s.v_l};
    auto pooled = attend_pool<T>(acoustic, ctx, *params.acoustic_pool, Pass::acoustic);
    s.z_a = pooled.pooled;
    s.maps.push_back(pooled.map);
    s.a = encode(TokenSequence<T>{s.z_a, Modality::acoustic}, params.acoustic_encoder).summary;
  }
  if (!params.wiring.second_pass) {
    s.v = s.v_one;
    return s;
  }
  SummaryVector<T> ctx[] = {s.a, s.v_l};
  auto pooled = attend_pool<T>(visual, ctx, *params.refine_pool, Pass::visual_pass2);
  s.z_v_hat = pooled.pooled;
  s.maps.push_back(pooled.map);
  s.v = encode(TokenSequence<T>{s.z_v_hat, Modality::visual}, params.visual_encoder).summary;
  return s;
}

}  // namespace me2et
