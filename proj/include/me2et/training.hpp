#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <vector>

#include "me2et/complexity.hpp"
#include "me2et/config.hpp"
#include "me2et/model.hpp"
#include "me2et/synthdata.hpp"

namespace me2et {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double valid_accuracy = 0;
  double valid_weighted_accuracy = 0;
  double valid_f1 = 0;
  std::uint64_t pool_flops = 0;  // forward pool FLOPs per sample
  double seconds = 0;
};

inline std::string epoch_log_header() {
  return "epoch,train_loss,valid_accuracy,valid_weighted_accuracy,valid_f1,pool_flops,seconds";
}

inline std::string to_csv(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%llu,%.3f", e.epoch, e.train_loss, e.valid_accuracy,
                e.valid_weighted_accuracy, e.valid_f1, static_cast<unsigned long long>(e.pool_flops), e.seconds);
  return buf;
}

template <class T>
struct FeaturizedSplits {
  std::vector<FeaturizedSample<T>> train, valid, test;

  const std::vector<FeaturizedSample<T>>& split(std::string_view name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ValidationError("unknown split '" + std::string(name) + "' (expected train, valid or test)");
  }
};

template <class T>
FeaturizedSplits<T> featurize_dataset(const synth::SynthDataset<T>& ds, const synth::FeatureConfig& cfg) {
  return {synth::featurize_all(ds.train, cfg), synth::featurize_all(ds.valid, cfg), synth::featurize_all(ds.test, cfg)};
}

// Mini-batch Adam over shuffled training samples; validation metrics after
// every epoch. The shuffle order comes from the "train/shuffle" stream of the
// run seed, so a run is fully determined by (config, dataset).
template <class T>
std::vector<EpochLog> train_model(Me2etModel<T>& model, const RunConfig& cfg, const FeaturizedSplits<T>& data,
                                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.train.empty()) throw ValidationError("train: the training split is empty");
  const auto& m = model.config();
  const auto pool_flops = cost::flops_model(m, {m.visual_tokens, m.acoustic_tokens, m.text_tokens}).pools;
  auto params = tensors_of(model.parameters());
  num::AdamState<T> state(params);
  auto rng = make_rng(cfg.seed, "train/shuffle");
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t bs = cfg.optimizer.batch_size;
  for (std::size_t epoch = 1; epoch <= cfg.optimizer.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      std::vector<const FeaturizedSample<T>*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + bs); ++i) batch.push_back(&data.train[order[i]]);
      loss += training_step<T>(batch, model, state, cfg.optimizer.adam());
      ++batches;
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss / static_cast<double>(batches);
    if (!data.valid.empty()) {
      const auto r = evaluate<T>(model, data.valid, cfg.threshold).report.average;
      e.valid_accuracy = r.accuracy;
      e.valid_weighted_accuracy = r.weighted_accuracy;
      e.valid_f1 = r.f1;
    }
    e.pool_flops = pool_flops;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

struct PlantedMass {
  double visual_pass1 = 0;
  double acoustic = 0;  // over samples that also carry an acoustic plant
  double visual_pass2 = 0;
  double uniform_visual = 0;  // |planted| / Q, the mass a uniform map would give
  std::size_t samples = 0;    // samples with at least one planted visual patch
};

// Mean planted-region attention mass per pass over samples that carry a
// visual plant. Passes the variant does not run stay 0.
template <class T>
PlantedMass planted_mass(const Me2etModel<T>& model, std::span<const FeaturizedSample<T>> samples) {
  num::NoGradScope<T> no_grad;
  PlantedMass out;
  std::size_t acoustic_samples = 0;
  for (const auto& s : samples) {
    if (s.planted.visual.empty()) continue;
    const auto r = model.forward(s);
    for (const auto& map : r.state.maps) {
      const auto& planted = map.modality == Modality::acoustic ? s.planted.acoustic : s.planted.visual;
      const double mass = planted.empty() ? 0.0 : synth::attention_mass_on_planted(map.weights, std::span<const std::size_t>(planted));
      (map.pass == Pass::visual_pass1 ? out.visual_pass1 : map.pass == Pass::acoustic ? out.acoustic : out.visual_pass2) += mass;
    }
    acoustic_samples += s.planted.acoustic.empty() ? 0 : 1;
    out.uniform_visual += static_cast<double>(s.planted.visual.size()) / static_cast<double>(s.visual_patches.rows());
    ++out.samples;
  }
  if (out.samples > 0) {
    const double n = static_cast<double>(out.samples);
    out.visual_pass1 /= n;
    out.acoustic /= static_cast<double>(std::max<std::size_t>(acoustic_samples, 1));
    out.visual_pass2 /= n;
    out.uniform_visual /= n;
  }
  return out;
}

}  // namespace me2et
