#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "me2et/model.hpp"
#include "me2et/numerics/ops.hpp"

namespace me2et::cost {

using num::flop_cost::kAdd;
using num::flop_cost::kGelu;
using num::flop_cost::kLayerNorm;
using num::flop_cost::kScale;
using num::flop_cost::kSoftmax;

// The five GEMM terms of one pre-LN block at n tokens (MAC = 2 FLOPs).
struct BlockTerms {
  std::uint64_t qkv = 0;          // 6 n d^2
  std::uint64_t scores = 0;       // 2 n^2 d
  std::uint64_t aggregation = 0;  // 2 n^2 d
  std::uint64_t projection = 0;   // 2 n d^2
  std::uint64_t ffn = 0;          // 16 n d^2
  std::uint64_t elementwise = 0;  // LayerNorms, scale, softmax, biases, GELU, residuals

  std::uint64_t gemm() const { return qkv + scores + aggregation + projection + ffn; }
  std::uint64_t total() const { return gemm() + elementwise; }
};

inline BlockTerms block_terms(std::uint64_t n, const TransformerConfig& cfg) {
  const std::uint64_t d = cfg.d, h = cfg.heads, hidden = cfg.ffn_mult * cfg.d;
  BlockTerms t;
  t.qkv = 2 * n * d * 3 * d;
  t.scores = 2 * n * n * d;
  t.aggregation = 2 * n * n * d;
  t.projection = 2 * n * d * d;
  t.ffn = 2 * n * d * hidden + 2 * n * hidden * d;
  t.elementwise = 2 * kLayerNorm * n * d           // two LayerNorms
                  + (kScale + kSoftmax) * h * n * n  // per-head score scaling and softmax
                  + 2 * kAdd * n * d                 // residuals
                  + kAdd * n * hidden + kGelu * n * hidden + kAdd * n * d;  // FFN biases and GELU
  return t;
}

// L-layer encoder stack on N tokens; [CLS] makes it N + 1 rows.
inline std::uint64_t flops_attention_block(std::uint64_t tokens, const TransformerConfig& cfg) {
  return cfg.layers * block_terms(tokens + 1, cfg).total();
}

// Full encode(): position add plus the layer stack.
inline std::uint64_t flops_encode(std::uint64_t tokens, const TransformerConfig& cfg) {
  return kAdd * (tokens + 1) * cfg.d + flops_attention_block(tokens, cfg);
}

// Gated contexts (the default) cost one multiply per token feature each.
inline std::uint64_t flops_pool(std::uint64_t tokens, std::uint64_t contexts, std::uint64_t d, std::uint64_t k) {
  return num::flop_cost::kMul * contexts * tokens * d
         + 2 * tokens * (1 + contexts) * d * k  // scoring GEMM
         + kAdd * tokens * k + kSoftmax * tokens * k
         + 2 * k * tokens * d;  // aggregation
}

inline std::uint64_t flops_patch_embed(std::uint64_t tokens, std::uint64_t patch_dim, std::uint64_t d) {
  return 2 * tokens * patch_dim * d + kAdd * tokens * d;
}

inline std::uint64_t flops_text_embed(std::uint64_t tokens, std::uint64_t d) { return 2 * kAdd * tokens * d; }

inline std::uint64_t flops_fusion(std::uint64_t d, std::uint64_t classes, bool feature_fusion) {
  std::uint64_t f = 3 * (2 * d * classes + kAdd * classes);
  if (feature_fusion) f += 2 * 3 * d * classes + kAdd * classes;
  const std::uint64_t heads = feature_fusion ? 4 : 3;
  return f + 2 * heads * classes;
}

struct Lengths {
  std::size_t visual = 576;    // Q
  std::size_t acoustic = 512;  // M
  std::size_t text = 300;
};

// Forward-pass FLOPs per component. Encoder entries include every pass that
// runs through them (the shared visual encoder counts twice in the two-pass model).
struct FlopsReport {
  Variant variant = Variant::full;
  Lengths lengths;
  std::size_t k = 0;
  TransformerConfig config;
  std::uint64_t embedding = 0;
  std::uint64_t pools = 0;
  std::uint64_t text_encoder = 0;
  std::uint64_t visual_encoder = 0;
  std::uint64_t acoustic_encoder = 0;
  std::uint64_t fusion = 0;

  std::uint64_t total() const { return embedding + pools + text_encoder + visual_encoder + acoustic_encoder + fusion; }
};

inline FlopsReport flops_model(const ModelConfig& model, const Lengths& len) {
  const Wiring w = ablation_variant(model.variant);
  const auto enc = model.encoder(1);
  const std::uint64_t d = model.d, k = model.pool_tokens;
  FlopsReport r;
  r.variant = model.variant;
  r.lengths = len;
  r.k = model.pool_tokens;
  r.config = enc;
  r.embedding = flops_patch_embed(len.visual, model.visual_patch_dim, d) +
                flops_patch_embed(len.acoustic, model.acoustic_patch_dim, d) + flops_text_embed(len.text, d);
  r.text_encoder = flops_encode(len.text, enc);
  if (w.pools) {
    r.pools = flops_pool(len.visual, 1, d, k) + flops_pool(len.acoustic, 2, d, k);
    r.visual_encoder = flops_encode(k, enc);
    r.acoustic_encoder = flops_encode(k, enc);
    if (w.second_pass) {
      r.pools += flops_pool(len.visual, 2, d, k);
      r.visual_encoder += flops_encode(k, enc);
    }
  } else {
    r.visual_encoder = flops_encode(len.visual, enc);
    r.acoustic_encoder = flops_encode(len.acoustic, enc);
  }
  r.fusion = flops_fusion(d, model.classes, w.feature_fusion);
  return r;
}

// Paper-scale geometry: d=768, 12 heads of 64, 12 layers, 16x16x3 image
// patches and 128x2 spectrogram patches.
inline ModelConfig paper_scale_model(Variant variant, std::size_t k, const Lengths& len, std::size_t classes = 6) {
  ModelConfig m;
  m.d = 768;
  m.heads = 12;
  m.head_dim = 64;
  m.layers = 12;
  m.pool_tokens = k;
  m.classes = classes;
  m.vocab = 30522;
  m.text_tokens = len.text;
  m.visual_tokens = len.visual;
  m.acoustic_tokens = len.acoustic;
  m.visual_patch_dim = 16 * 16 * 3;
  m.acoustic_patch_dim = 128 * 2;
  m.variant = variant;
  return m;
}

// Desk-scale benchmark geometry: d=64, 4 heads, 4 layers, same patch shapes.
inline ModelConfig desk_bench_model(Variant variant, std::size_t k, const Lengths& len, std::size_t classes = 6) {
  ModelConfig m = paper_scale_model(variant, k, len, classes);
  m.d = 64;
  m.heads = 4;
  m.head_dim = 16;
  m.layers = 4;
  m.vocab = 1000;
  return m;
}

struct BenchReport {
  double mean_s = 0;
  double std_s = 0;
  std::size_t runs = 0;
  std::int64_t peak_bytes = 0;
};

namespace detail {

template <class T>
FeaturizedSample<T> random_sample(const ModelConfig& m, const Lengths& len, std::uint64_t seed) {
  auto rng = make_rng(seed, "bench/input");
  FeaturizedSample<T> s;
  s.visual_patches = uniform_tensor<T>({len.visual, m.visual_patch_dim}, 0.0, 1.0, rng);
  s.acoustic_patches = normal_tensor<T>({len.acoustic, m.acoustic_patch_dim}, 1.0, rng);
  std::uniform_int_distribution<std::size_t> id(0, m.vocab - 1);
  for (std::size_t i = 0; i < len.text; ++i) s.text_ids.push_back(id(rng));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t c = 0; c < m.classes; ++c) s.label.push_back(coin(rng) ? 1 : 0);
  return s;
}

template <class T>
void forward_backward(const Me2etModel<T>& model, const FeaturizedSample<T>& sample) {
  auto params = tensors_of(model.parameters());
  num::zero_grad<T>(params);
  num::Tape<T> tape;
  {
    num::TapeScope<T> scope(tape);
    auto loss = num::bce_with_logits(model.forward(sample).predictions.p, label_tensor<T>(sample.label));
    tape.backward(loss);
  }
  tape.clear();
}

}  // namespace detail

// Mean/stddev wall-clock of one forward+backward over `runs` timed repetitions,
// after 3 untimed warmups.
template <class T = float>
BenchReport bench_time(const ModelConfig& m, const Lengths& len, std::size_t runs = 100, std::uint64_t seed = 0) {
  if (runs == 0) throw ValidationError("bench_time: runs must be at least 1");
  Me2etModel<T> model(m, seed);
  const auto sample = detail::random_sample<T>(m, len, seed);
  for (int i = 0; i < 3; ++i) detail::forward_backward(model, sample);
  std::vector<double> times;
  times.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    const auto start = std::chrono::steady_clock::now();
    detail::forward_backward(model, sample);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  BenchReport out;
  out.runs = runs;
  out.mean_s = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(runs);
  double var = 0;
  for (double t : times) var += (t - out.mean_s) * (t - out.mean_s);
  out.std_s = std::sqrt(var / static_cast<double>(runs));
  return out;
}

// Peak concurrently-live tensor bytes (parameters, activations, gradients)
// across one forward+backward.
template <class T = float>
std::int64_t bench_memory(const ModelConfig& m, const Lengths& len, std::uint64_t seed = 0) {
  const auto baseline = num::memory_stats().live_bytes;
  Me2etModel<T> model(m, seed);
  const auto sample = detail::random_sample<T>(m, len, seed);
  num::reset_peak_memory();
  detail::forward_backward(model, sample);
  return num::memory_stats().peak_bytes - baseline;
}

}  // namespace me2et::cost
