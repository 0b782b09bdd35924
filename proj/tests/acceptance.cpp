// Acceptance suite: one pass/fail line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "me2et/complexity.hpp"
#include "me2et/featurization/fbank.hpp"
#include "me2et/featurization/patches.hpp"
#include "me2et/gradcheck_suite.hpp"
#include "me2et/training.hpp"
#include "oracles.hpp"

using namespace me2et;
using Td = num::Tensor<double>;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kDistributionTolerance = 1e-6;
constexpr double kOracleTolerance = 1e-10;
constexpr double kMinFlopsRatio = 2.5;
constexpr double kMaxMemoryRatio = 0.9;
constexpr double kMinTestAccuracy = 0.9;
constexpr double kMinPlantedLift = 2.0;
constexpr std::size_t kAblationSeeds = 5;
constexpr std::size_t kAblationEpochs = 20;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

PoolParams<double> random_pool(std::size_t d, std::size_t k, std::size_t m, Rng& rng, double scale) {
  auto p = PoolParams<double>::init(d, k, m, rng);
  p.w = normal_tensor<double>(p.w.shape(), scale, rng);
  p.b = normal_tensor<double>({k}, scale, rng);
  return p;
}

std::vector<SummaryVector<double>> random_contexts(std::size_t m, std::size_t d, Rng& rng) {
  std::vector<SummaryVector<double>> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back({normal_tensor<double>({1, d}, 1.0, rng), Modality::textual});
  return out;
}

Outcome gradient_integrity() {
  const auto start = std::chrono::steady_clock::now();
  const auto rows = run_gradcheck_suite(kGradTolerance);
  const double secs = seconds_since(start);
  std::size_t passed = 0;
  double worst = 0;
  std::string failed;
  for (const auto& r : rows) {
    passed += r.passed;
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) failed += " " + r.name;
  }
  const bool ok = passed == rows.size() && rows.back().name == "model_end_to_end" && secs < 60;
  return {ok, fmt("%zu/%zu cases, worst rel err %.2e, %.1f s%s", passed, rows.size(), worst, secs, failed.c_str())};
}

Outcome pooling_invariants() {
  double worst_sum = 0, worst_recon = 0, min_weight = 1;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto rng = make_rng(seed, "acceptance/pool");
    const std::size_t n = 1 + seed % 37, d = 2 + seed % 7, k = 1 + seed % 9, m = 1 + seed % 2;
    auto p = random_pool(d, k, m, rng, 2.0);
    TokenSequence<double> t{normal_tensor<double>({n, d}, 1.0, rng), Modality::visual};
    const auto out = attend_pool<double>(t, random_contexts(m, d, rng), p, Pass::visual_pass1);
    const auto recon = oracle::matmul(oracle::of(out.map.weights), oracle::of(t.tokens));
    worst_recon = std::max(worst_recon, oracle::max_abs_diff(out.pooled, recon));
    for (std::size_t r = 0; r < k; ++r) {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        total += out.map.weights.at(r, i);
        min_weight = std::min(min_weight, out.map.weights.at(r, i));
      }
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }
  const bool ok = worst_sum <= kDistributionTolerance && min_weight >= 0 && worst_recon <= kDistributionTolerance;
  return {ok, fmt("1000 instances, max |row sum - 1| %.1e, min weight %.1e, max reconstruction residual %.1e", worst_sum,
                  min_weight, worst_recon)};
}

Outcome token_count_contract() {
  const std::size_t d = 16, k = 8;
  auto rng = make_rng(3, "acceptance/contract");
  auto p = random_pool(d, k, 2, rng, 0.5);
  const auto ctx = random_contexts(2, d, rng);
  const TransformerConfig cfg{d, 2, 8, 2, 4, k};
  const auto enc = EncoderParams<double>::init(cfg, rng);
  bool ok = true;
  std::vector<std::uint64_t> costs;
  for (std::size_t n : {1u, 8u, 64u, 512u, 1024u}) {
    num::Tape<double> tape;
    num::TapeScope<double> scope(tape);
    TokenSequence<double> t{normal_tensor<double>({n, d}, 1.0, rng), Modality::acoustic};
    const auto pooled = attend_pool<double>(t, ctx, p, Pass::acoustic);
    ok = ok && pooled.pooled.rows() == k && pooled.pooled.cols() == d;
    tape.reset_flops();
    encode(TokenSequence<double>{pooled.pooled, Modality::acoustic}, enc);
    costs.push_back(tape.flops());
  }
  ok = ok && std::all_of(costs.begin(), costs.end(), [&](auto c) { return c == costs.front(); });
  return {ok, fmt("K=%zu tokens out for N in {1,8,64,512,1024}; encoder FLOPs %llu at every N", k,
                  static_cast<unsigned long long>(costs.front()))};
}

Outcome oracle_equivalence() {
  double pool = 0, attn = 0, head = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto rng = make_rng(seed, "acceptance/oracle");
    const std::size_t n = 1 + seed % 9, d = 2 + seed % 5, k = 1 + seed % 4, m = 1 + seed % 2;
    {
      auto p = random_pool(d, k, m, rng, 1.0);
      TokenSequence<double> t{normal_tensor<double>({n, d}, 1.0, rng), Modality::visual};
      const auto ctx = random_contexts(m, d, rng);
      std::vector<oracle::Mat> mats;
      for (const auto& c : ctx) mats.push_back(oracle::of(c.values));
      const auto out = attend_pool<double>(t, ctx, p, Pass::visual_pass2);
      const auto ref = oracle::attend_pool(oracle::of(t.tokens), mats, p);
      pool = std::max({pool, oracle::max_abs_diff(out.map.weights, ref.map), oracle::max_abs_diff(out.pooled, ref.pooled)});
    }
    {
      const TransformerConfig cfg{4, 2, 2, 1, 4, 16};
      auto enc = EncoderParams<double>::init(cfg, rng);
      for (auto* w : {&enc.layers[0].w_qkv, &enc.layers[0].w_msa}) *w = normal_tensor<double>(w->shape(), 0.5, rng);
      const auto x = normal_tensor<double>({n, 4}, 1.0, rng);
      attn = std::max(attn, oracle::max_abs_diff(msa(x, enc.layers[0], cfg), oracle::msa(oracle::of(x), enc.layers[0], cfg)));
    }
    {
      const bool fusion = seed % 4 != 3;
      auto p = FusionParams<double>::init(d, 3, fusion, false, rng);
      ParamList<double> list;
      p.collect(list, "h");
      for (auto& [name, t] : list) t = normal_tensor<double>(t.shape(), 1.0, rng);
      SummaryVector<double> v{normal_tensor<double>({1, d}, 1.0, rng), Modality::visual};
      SummaryVector<double> a{normal_tensor<double>({1, d}, 1.0, rng), Modality::acoustic};
      SummaryVector<double> l{normal_tensor<double>({1, d}, 1.0, rng), Modality::textual};
      const auto out = fuse(v, a, l, p);
      const auto ref = oracle::fuse(oracle::of(v.values), oracle::of(a.values), oracle::of(l.values), p);
      head = std::max(head, oracle::max_abs_diff(oracle::of(out.p).v, ref.p));
    }
  }
  const bool ok = pool <= kOracleTolerance && attn <= kOracleTolerance && head <= kOracleTolerance;
  return {ok, fmt("100 instances each, max abs diff attend_pool %.1e, msa %.1e, fuse %.1e", pool, attn, head)};
}

Outcome complexity_reproduction() {
  const cost::Lengths len;  // Q=576, M=512, N_text=300
  const auto flat = cost::flops_model(cost::paper_scale_model(Variant::no_attention, 32, len), len).total();
  std::vector<double> ratios;
  for (std::size_t k : {32u, 64u, 128u, 256u}) {
    ratios.push_back(static_cast<double>(flat) /
                     static_cast<double>(cost::flops_model(cost::paper_scale_model(Variant::full, k, len), len).total()));
  }
  const bool monotone = std::is_sorted(ratios.rbegin(), ratios.rend()) &&
                        std::adjacent_find(ratios.begin(), ratios.end()) == ratios.end();
  return {ratios[0] >= kMinFlopsRatio && monotone,
          fmt("no_attention/full FLOPs at K=32,64,128,256: %.3f %.3f %.3f %.3f", ratios[0], ratios[1], ratios[2], ratios[3])};
}

Outcome measured_speed() {
  const auto start = std::chrono::steady_clock::now();
  const cost::Lengths len;
  const auto full = cost::bench_time<float>(cost::desk_bench_model(Variant::full, 32, len), len, 100);
  const auto flat = cost::bench_time<float>(cost::desk_bench_model(Variant::no_attention, 32, len), len, 100);
  const double secs = seconds_since(start), ratio = flat.mean_s / full.mean_s;
  return {ratio > 1.0 && secs < 300, fmt("fwd+bwd full(K=32) %.4f+-%.4f s, no_attention %.4f+-%.4f s, speedup %.2fx, %.0f s",
                                         full.mean_s, full.std_s, flat.mean_s, flat.std_s, ratio, secs)};
}

Outcome memory_trend() {
  const auto start = std::chrono::steady_clock::now();
  const cost::Lengths len;
  const double flat = static_cast<double>(cost::bench_memory<float>(cost::desk_bench_model(Variant::no_attention, 32, len), len));
  std::vector<double> ratios;
  for (std::size_t k : {32u, 64u, 128u, 256u}) {
    ratios.push_back(static_cast<double>(cost::bench_memory<float>(cost::desk_bench_model(Variant::full, k, len), len)) / flat);
  }
  const double secs = seconds_since(start);
  const bool monotone = std::is_sorted(ratios.begin(), ratios.end()) &&
                        std::adjacent_find(ratios.begin(), ratios.end()) == ratios.end();
  return {ratios[0] < kMaxMemoryRatio && monotone && secs < 300,
          fmt("peak bytes full/no_attention at K=32,64,128,256: %.3f %.3f %.3f %.3f, %.0f s", ratios[0], ratios[1], ratios[2],
              ratios[3], secs)};
}

// Shared by the learnability and interpretability criteria.
struct TrainedDesk {
  synth::SynthSpec spec;
  FeaturizedSplits<float> data;
  RunConfig config;
  std::unique_ptr<Me2etModel<float>> model;
  double seconds = 0;
  std::size_t epochs = 0;
};

TrainedDesk& desk() {
  static TrainedDesk t = [] {
    TrainedDesk t;
    t.config = desk_run_config();
    t.data = featurize_dataset(synth::generate<float>(t.spec), t.config.features);
    t.model = std::make_unique<Me2etModel<float>>(t.config.model_config(t.spec), t.config.seed);
    const auto start = std::chrono::steady_clock::now();
    t.epochs = train_model(*t.model, t.config, t.data).size();
    t.seconds = seconds_since(start);
    return t;
  }();
  return t;
}

Outcome learnability() {
  auto& t = desk();
  const auto test = evaluate<float>(*t.model, t.data.test, t.config.threshold).report;
  std::string per_class;
  for (const auto& c : test.per_class) per_class += fmt(" %.3f", c.accuracy);
  // Determinism: two one-epoch runs from the same seed end with identical weights.
  auto once = t.config;
  once.optimizer.epochs = 1;
  auto weights = [&] {
    Me2etModel<float> m(t.config.model_config(t.spec), once.seed);
    train_model(m, once, t.data);
    std::vector<float> all;
    for (auto& w : tensors_of(m.parameters())) all.insert(all.end(), w.data().begin(), w.data().end());
    return all;
  };
  const bool deterministic = weights() == weights();
  const bool ok = test.average.accuracy >= kMinTestAccuracy && deterministic && t.seconds < 300;
  return {ok, fmt("mean per-class test accuracy %.3f (per class%s), %zu epochs in %.0f s, deterministic %s",
                  test.average.accuracy, per_class.c_str(), t.epochs, t.seconds, deterministic ? "yes" : "NO")};
}

Outcome ablation_ordering() {
  const auto start = std::chrono::steady_clock::now();
  auto& t = desk();
  const Variant variants[] = {Variant::full, Variant::no_two_pass, Variant::no_attention};
  double f1[3] = {0, 0, 0};
  std::string per_seed;
  for (std::size_t seed = 0; seed < kAblationSeeds; ++seed) {
    per_seed += fmt(" s%zu:", seed);
    for (int v = 0; v < 3; ++v) {
      auto cfg = t.config;
      cfg.seed = seed;
      cfg.variant = variants[v];
      cfg.optimizer.epochs = kAblationEpochs;
      Me2etModel<float> model(cfg.model_config(t.spec), cfg.seed);
      train_model(model, cfg, t.data);
      const double f = evaluate<float>(model, t.data.test, cfg.threshold).report.average.f1;
      f1[v] += f / kAblationSeeds;
      per_seed += fmt("%s%.3f", v ? "/" : "", f);
    }
  }
  const double secs = seconds_since(start);
  const bool ok = f1[0] >= f1[1] && f1[0] >= f1[2] && secs < 1200;
  return {ok, fmt("mean test F1 over %zu seeds (%zu epochs): full %.4f, no_two_pass %.4f, no_attention %.4f; per seed "
                  "full/no_two_pass/no_attention%s; %.0f s",
                  kAblationSeeds, kAblationEpochs, f1[0], f1[1], f1[2], per_seed.c_str(), secs)};
}

Outcome interpretability() {
  auto& t = desk();
  const auto m = planted_mass<float>(*t.model, t.data.test);
  const bool ok = m.visual_pass1 >= kMinPlantedLift * m.uniform_visual && m.visual_pass2 >= kMinPlantedLift * m.uniform_visual &&
                  m.visual_pass2 >= m.visual_pass1;
  return {ok, fmt("planted visual mass pass1 %.3f, pass2 %.3f vs uniform %.3f over %zu test samples (acoustic %.3f)",
                  m.visual_pass1, m.visual_pass2, m.uniform_visual, m.samples, m.acoustic)};
}

Outcome featurization_checks() {
  std::mt19937_64 rng(11);
  bool ok = true;
  for (int trial = 0; trial < 300 && ok; ++trial) {
    const std::size_t p = 1 + rng() % 8, j = 1 + rng() % 4, h = p * (1 + rng() % 6), w = p * (1 + rng() % 6);
    const std::size_t c = rng() % 2 ? 3 : 1;
    feat::VisualInput<double> in{j, h, w, c, p, std::vector<double>(j * h * w * c, 0.5)};
    ok = feat::split_image_patches(in).rows() == j * h * w / (p * p);
    const std::size_t frames = 2 + rng() % 300, bins = 1 + rng() % 16;
    feat::Spectrogram<double> spec{bins, frames, 0.01, std::vector<double>(bins * frames)};
    ok = ok && feat::split_spectrogram_patches(spec, feat::AcousticPatchMode::temporal).rows() == frames / 2;
    const double sr = 8000 + static_cast<double>(rng() % 40000);
    const auto win = static_cast<std::size_t>(std::lround(0.025 * sr)), hop = static_cast<std::size_t>(std::lround(0.010 * sr));
    const std::size_t len = win + rng() % 50000;
    ok = ok && feat::fbank_frame_count(len, sr) == 1 + (len - win) / hop;
  }
  const bool geometry = ok;
  // 1 kHz sine: the filter whose mel centre is nearest 1 kHz wins every frame.
  bool sine = true;
  for (double sr : {16000.0, 22050.0, 44100.0}) {
    const double mel_hi = 2595.0 * std::log10(1.0 + sr / 2 / 700.0), target = 2595.0 * std::log10(1.0 + 1000.0 / 700.0);
    std::size_t expected = 0;
    for (std::size_t f = 1; f < 128; ++f) {
      if (std::abs(mel_hi * (f + 1) / 129.0 - target) < std::abs(mel_hi * (expected + 1) / 129.0 - target)) expected = f;
    }
    std::vector<double> x(static_cast<std::size_t>(sr / 2));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * 1000.0 * static_cast<double>(i) / sr);
    const auto s = feat::log_mel_fbank<double>(x, sr);
    for (std::size_t t = 0; t < s.frames; ++t) {
      std::size_t arg = 0;
      for (std::size_t f = 1; f < s.bins; ++f)
        if (s.at(f, t) > s.at(arg, t)) arg = f;
      sine = sine && arg == expected;
    }
  }
  return {geometry && sine, fmt("300 random geometries (Q, M, frame count) %s; 1 kHz sine bin localisation %s",
                                geometry ? "exact" : "MISMATCH", sine ? "exact" : "MISMATCH")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"pooling invariants", pooling_invariants},
      {"token-count contract", token_count_contract},
      {"oracle equivalence", oracle_equivalence},
      {"analytic complexity", complexity_reproduction},
      {"measured speed trend", measured_speed},
      {"memory trend", memory_trend},
      {"learnability", learnability},
      {"ablation ordering", ablation_ordering},
      {"planted-region attention", interpretability},
      {"featurization", featurization_checks},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.passed ? 0 : 1;
    std::printf("[%s] %2zu %s: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed;
}
