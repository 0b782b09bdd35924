#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "me2et/model.hpp"
#include "me2et/numerics/adam.hpp"
#include "me2et/synthdata.hpp"

namespace me2et {

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;

  num::AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
};

// Model hyperparameters a user chooses. Token counts, patch widths, vocabulary
// and class count come from the dataset.
struct ModelHyper {
  std::size_t d = 768;
  std::size_t heads = 12;
  std::size_t head_dim = 64;
  std::size_t layers = 12;
  std::size_t pool_tokens = 256;  // K
  bool zero_init_heads = false;
};

// Defaults are the published full-scale settings; configs/desk.json holds the
// laptop profile used by the tests.
struct RunConfig {
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
  std::string dataset;
  std::string output_dir = "run";
  ModelHyper model;
  synth::FeatureConfig features;
  OptimizerConfig optimizer;
  double threshold = 0.5;

  // Model geometry for a dataset generated from `spec`.
  ModelConfig model_config(const synth::SynthSpec& spec) const {
    ModelConfig m;
    m.d = model.d;
    m.heads = model.heads;
    m.head_dim = model.head_dim;
    m.layers = model.layers;
    m.pool_tokens = model.pool_tokens;
    m.zero_init_heads = model.zero_init_heads;
    m.classes = spec.classes;
    m.vocab = spec.vocab;
    m.text_tokens = spec.text_len;
    m.visual_tokens = spec.visual_tokens();
    m.acoustic_tokens = spec.acoustic_tokens();
    m.visual_patch_dim = spec.patch * spec.patch * spec.channels;
    m.acoustic_patch_dim = 2 * features.mel_bins;
    m.variant = variant;
    m.validate();
    return m;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ValidationError("run config: " + m); };
    if (model.d == 0 || model.heads == 0 || model.head_dim == 0) fail("model d, heads and head_dim must be positive");
    if (model.heads * model.head_dim != model.d) {
      fail("heads * head_dim = " + std::to_string(model.heads * model.head_dim) + " differs from d = " + std::to_string(model.d));
    }
    if (model.pool_tokens == 0) fail("pool_tokens (K) must be at least 1");
    if (!(optimizer.lr > 0) || !std::isfinite(optimizer.lr)) fail("lr must be positive");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1) || !(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
      fail("betas must lie in [0, 1)");
    }
    if (!(optimizer.eps > 0)) fail("eps must be positive");
    if (optimizer.batch_size == 0) fail("batch_size must be at least 1");
    if (!(threshold > 0 && threshold < 1)) fail("threshold must lie in (0, 1)");
    if (features.mel_bins < 2) fail("mel_bins must be at least 2");
    if (!(features.pixel_scale > 0) || !(features.fbank_scale > 0)) fail("feature scales must be positive");
  }
};

namespace detail {

// Strict object reader: unknown keys and wrong types are errors.
class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }

  template <class F>
  void read(const char* key, F& field) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    const auto& v = j_[key];
    if constexpr (std::is_same_v<F, bool>) {
      if (!v.is_boolean()) fail(key, "a boolean");
    } else if constexpr (std::is_integral_v<F>) {
      if (!v.is_number_integer() || v.template get<double>() < 0) fail(key, "a non-negative integer");
    } else if constexpr (std::is_floating_point_v<F>) {
      if (!v.is_number()) fail(key, "a number");
    } else {
      if (!v.is_string()) fail(key, "a string");
    }
    field = v.template get<F>();
  }

  const nlohmann::json* object(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_[key] : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ValidationError(where_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ValidationError(where_ + ": '" + key + "' must be " + what);
  }

  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::JsonReader top(j, "run config");
  top.read("seed", c.seed);
  std::string variant(to_string(c.variant));
  top.read("variant", variant);
  c.variant = parse_variant(variant);
  top.read("dataset", c.dataset);
  top.read("output_dir", c.output_dir);
  top.read("threshold", c.threshold);
  if (const auto* m = top.object("model")) {
    detail::JsonReader r(*m, "run config model");
    r.read("d", c.model.d);
    r.read("heads", c.model.heads);
    r.read("head_dim", c.model.head_dim);
    r.read("layers", c.model.layers);
    r.read("pool_tokens", c.model.pool_tokens);
    r.read("zero_init_heads", c.model.zero_init_heads);
    r.finish();
  }
  if (const auto* f = top.object("features")) {
    detail::JsonReader r(*f, "run config features");
    r.read("mel_bins", c.features.mel_bins);
    r.read("fbank_offset", c.features.fbank_offset);
    r.read("fbank_scale", c.features.fbank_scale);
    r.read("pixel_offset", c.features.pixel_offset);
    r.read("pixel_scale", c.features.pixel_scale);
    r.finish();
  }
  if (const auto* o = top.object("optimizer")) {
    detail::JsonReader r(*o, "run config optimizer");
    r.read("lr", c.optimizer.lr);
    r.read("beta1", c.optimizer.beta1);
    r.read("beta2", c.optimizer.beta2);
    r.read("eps", c.optimizer.eps);
    r.read("epochs", c.optimizer.epochs);
    r.read("batch_size", c.optimizer.batch_size);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"variant", std::string(to_string(c.variant))},
          {"dataset", c.dataset},
          {"output_dir", c.output_dir},
          {"threshold", c.threshold},
          {"model",
           {{"d", c.model.d},
            {"heads", c.model.heads},
            {"head_dim", c.model.head_dim},
            {"layers", c.model.layers},
            {"pool_tokens", c.model.pool_tokens},
            {"zero_init_heads", c.model.zero_init_heads}}},
          {"features",
           {{"mel_bins", c.features.mel_bins},
            {"fbank_offset", c.features.fbank_offset},
            {"fbank_scale", c.features.fbank_scale},
            {"pixel_offset", c.features.pixel_offset},
            {"pixel_scale", c.features.pixel_scale}}},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"epochs", c.optimizer.epochs},
            {"batch_size", c.optimizer.batch_size}}}};
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// The laptop profile: d=32, 4 heads of 8, 2 layers, K=8, lr 1e-3, 30 epochs.
inline RunConfig desk_run_config() {
  RunConfig c;
  c.model = {32, 4, 8, 2, 8, false};
  c.optimizer.lr = 1e-3;
  c.optimizer.epochs = 30;
  return c;
}

}  // namespace me2et
