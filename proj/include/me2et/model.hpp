#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "me2et/encoder.hpp"
#include "me2et/featurization/embed.hpp"
#include "me2et/fusion_head.hpp"
#include "me2et/numerics/adam.hpp"
#include "me2et/numerics/ops.hpp"
#include "me2et/progressive_attention.hpp"
#include "me2et/rng.hpp"
#include "me2et/types.hpp"

namespace me2et {

// Shape of a whole model. Token counts are maxima; encoder position tables are
// sized from them (K for pooled variants, Q/M when the raw tokens go straight in).
struct ModelConfig {
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t head_dim = 8;
  std::size_t layers = 2;
  std::size_t pool_tokens = 8;  // K
  std::size_t classes = 4;
  std::size_t vocab = 100;
  std::size_t text_tokens = 16;
  std::size_t visual_tokens = 64;     // Q
  std::size_t acoustic_tokens = 99;   // M
  std::size_t visual_patch_dim = 192;
  std::size_t acoustic_patch_dim = 256;
  Variant variant = Variant::full;
  bool zero_init_heads = false;

  TransformerConfig encoder(std::size_t max_tokens) const { return {d, heads, head_dim, layers, 4, max_tokens}; }

  void validate() const {
    encoder(1).validate();
    if (pool_tokens == 0) throw ValidationError("model: pool_tokens (K) must be at least 1");
    if (classes < 2) throw ValidationError("model: at least 2 classes required");
    if (vocab == 0 || text_tokens == 0 || visual_tokens == 0 || acoustic_tokens == 0) {
      throw ValidationError("model: vocabulary and token counts must be positive");
    }
    if (visual_patch_dim == 0 || acoustic_patch_dim == 0) throw ValidationError("model: patch dimensions must be positive");
  }
};

template <class T>
struct ForwardResult {
  TriModalState<T> state;
  Predictions<T> predictions;
};

// Every parameter group draws from its own named seed stream, so variants
// built from the same seed share identical values for the groups they have in common.
template <class T>
class Me2etModel {
 public:
  Me2etModel(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
    cfg.validate();
    const Wiring wiring = ablation_variant(cfg.variant);
    auto stream = [seed](const char* name) { return make_rng(seed, std::string("params/") + name); };
    {
      auto rng = stream("visual_embed");
      visual_embed = feat::PatchEmbedParams<T>::init(cfg.visual_patch_dim, cfg.d, rng);
    }
    {
      auto rng = stream("acoustic_embed");
      acoustic_embed = feat::PatchEmbedParams<T>::init(cfg.acoustic_patch_dim, cfg.d, rng);
    }
    {
      auto rng = stream("text_embed");
      text_embed = feat::TextEmbedParams<T>::init(cfg.vocab, cfg.text_tokens, cfg.d, rng);
    }
    core.wiring = wiring;
    const std::size_t k = cfg.pool_tokens;
    {
      auto rng = stream("text_encoder");
      core.text_encoder = EncoderParams<T>::init(cfg.encoder(cfg.text_tokens), rng);
    }
    {
      auto rng = stream("visual_encoder");
      core.visual_encoder = EncoderParams<T>::init(cfg.encoder(wiring.pools ? k : cfg.visual_tokens), rng);
    }
    {
      auto rng = stream("acoustic_encoder");
      core.acoustic_encoder = EncoderParams<T>::init(cfg.encoder(wiring.pools ? k : cfg.acoustic_tokens), rng);
    }
    if (wiring.pools) {
      auto r1 = stream("visual_pool");
      core.visual_pool = PoolParams<T>::init(cfg.d, k, 1, r1);
      auto r2 = stream("acoustic_pool");
      core.acoustic_pool = PoolParams<T>::init(cfg.d, k, 2, r2);
      if (wiring.second_pass) {
        auto r3 = stream("refine_pool");
        core.refine_pool = PoolParams<T>::init(cfg.d, k, 2, r3);
      }
    }
    auto rng = stream("head");
    head = FusionParams<T>::init(cfg.d, cfg.classes, wiring.feature_fusion, cfg.zero_init_heads, rng);
  }

  const ModelConfig& config() const { return config_; }

  ParamList<T> parameters() const {
    ParamList<T> out;
    visual_embed.collect(out, "visual_embed");
    acoustic_embed.collect(out, "acoustic_embed");
    text_embed.collect(out, "text_embed");
    core.collect(out);
    head.collect(out, "head");
    return out;
  }

  ForwardResult<T> forward(const num::Tensor<T>& visual_patches, const num::Tensor<T>& acoustic_patches,
                           std::span<const std::size_t> text_ids) const {
    auto visual = feat::embed_patches(visual_patches, visual_embed, Modality::visual);
    auto acoustic = feat::embed_patches(acoustic_patches, acoustic_embed, Modality::acoustic);
    auto textual = feat::embed_text(text_ids, text_embed);
    auto state = me2et::forward(visual, acoustic, textual, core);
    auto predictions = fuse(state.v, state.a, state.v_l, head);
    return {std::move(state), std::move(predictions)};
  }

  ForwardResult<T> forward(const FeaturizedSample<T>& sample) const {
    return forward(sample.visual_patches, sample.acoustic_patches, sample.text_ids);
  }

  feat::PatchEmbedParams<T> visual_embed;
  feat::PatchEmbedParams<T> acoustic_embed;
  feat::TextEmbedParams<T> text_embed;
  TriModalParams<T> core;
  FusionParams<T> head;

 private:
  ModelConfig config_;
};

template <class T>
num::Tensor<T> label_tensor(const std::vector<int>& label) {
  std::vector<T> values(label.begin(), label.end());
  return num::Tensor<T>::from({1, label.size()}, std::move(values));
}

// Mean BCE of the final logits over `batch`, recorded on the active tape.
template <class T>
num::Tensor<T> batch_loss(const Me2etModel<T>& model, std::span<const FeaturizedSample<T>* const> batch) {
  if (batch.empty()) throw ValidationError("batch_loss: empty batch");
  num::Tensor<T> total;
  for (const auto* sample : batch) {
    auto loss = num::bce_with_logits(model.forward(*sample).predictions.p, label_tensor<T>(sample->label));
    total = total.defined() ? num::add(total, loss) : loss;
  }
  return num::scale(total, T(1) / T(batch.size()));
}

// One optimisation step: mean BCE over the batch, backward, Adam update.
template <class T>
double training_step(std::span<const FeaturizedSample<T>* const> batch, Me2etModel<T>& model,
                     num::AdamState<T>& state, const num::AdamConfig& adam) {
  auto params = tensors_of(model.parameters());
  num::zero_grad<T>(params);
  num::Tape<T> tape;
  double value = 0;
  {
    num::TapeScope<T> scope(tape);
    auto loss = batch_loss(model, batch);
    value = loss.item();
    tape.backward(loss);
  }
  tape.clear();
  num::adam_step<T>(params, state, adam);
  num::zero_grad<T>(params);
  return value;
}

template <class T>
struct Evaluation {
  LabelMatrix predictions;
  LabelMatrix targets;
  MetricsReport report;
};

template <class T>
Evaluation<T> evaluate(const Me2etModel<T>& model, std::span<const FeaturizedSample<T>> samples, double threshold = 0.5) {
  num::NoGradScope<T> no_grad;
  Evaluation<T> out;
  for (const auto& s : samples) {
    auto logits = model.forward(s).predictions.p;
    out.predictions.push_back(predict_labels<T>(logits.data(), threshold));
    out.targets.push_back(s.label);
  }
  out.report = metrics(out.predictions, out.targets);
  return out;
}

}  // namespace me2et
