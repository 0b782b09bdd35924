#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "me2et/error.hpp"
#include "me2et/featurization/fbank.hpp"
#include "me2et/featurization/io.hpp"
#include "me2et/featurization/patches.hpp"
#include "me2et/rng.hpp"
#include "me2et/types.hpp"

namespace me2et::synth {

struct SynthSpec {
  std::size_t classes = 4;
  std::size_t train = 640;
  std::size_t valid = 32;
  std::size_t test = 128;
  std::size_t images = 4;  // J
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::size_t patch = 8;
  double audio_seconds = 2.0;
  std::uint32_t sample_rate = 8000;
  std::size_t text_len = 16;
  std::size_t vocab = 100;
  double snr = 5.0;
  double positive_rate = 0.5;
  // Chance that a positive class is planted in a given modality. Each positive
  // class is always planted in at least one modality.
  double plant_rate = 0.7;
  std::uint64_t seed = 0;

  std::size_t grid_w() const { return width / patch; }
  std::size_t grid_h() const { return height / patch; }
  std::size_t patches_per_image() const { return grid_w() * grid_h(); }
  std::size_t visual_tokens() const { return images * patches_per_image(); }
  std::size_t samples() const { return static_cast<std::size_t>(std::lround(audio_seconds * sample_rate)); }
  std::size_t frames() const { return feat::fbank_frame_count(samples(), sample_rate); }
  std::size_t acoustic_tokens() const { return frames() / 2; }
  // 2x2 patch blocks available for visual plants.
  std::size_t visual_blocks() const { return images * (grid_h() / 2) * (grid_w() / 2); }
  std::size_t motif_len() const { return std::min<std::size_t>(3, text_len / classes); }
  std::size_t reserved_ids() const { return 3 * classes; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("synth spec: " + msg); };
    if (classes < 2) fail("at least 2 classes required");
    if (!(snr > 0)) fail("snr must be positive");
    if (!(positive_rate > 0 && positive_rate <= 1)) fail("positive_rate must lie in (0, 1]");
    if (!(plant_rate > 0 && plant_rate <= 1)) fail("plant_rate must lie in (0, 1]");
    if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
    if (patch == 0 || height % patch != 0 || width % patch != 0) fail("image size must be a multiple of the patch size");
    if (visual_blocks() < classes) {
      fail("geometry hosts " + std::to_string(visual_blocks()) + " 2x2 patch blocks, need one per class (" +
           std::to_string(classes) + ")");
    }
    if (sample_rate < 8000) fail("sample_rate must be at least 8000");
    if (acoustic_tokens() < classes) fail("audio too short: fewer acoustic tokens than classes");
    if (text_len < classes) fail("text_len must give every class at least one slot");
    if (vocab <= reserved_ids()) fail("vocab must exceed the " + std::to_string(reserved_ids()) + " reserved motif ids");
  }
};

template <class T>
struct SynthSample {
  std::string id;
  feat::VisualInput<T> visual;
  std::vector<T> waveform;
  std::uint32_t sample_rate = 0;
  std::vector<std::size_t> text_ids;
  std::vector<int> label;
  PlantedRegions planted;  // token indices after featurization
};

template <class T>
struct SynthDataset {
  SynthSpec spec;
  std::vector<SynthSample<T>> train, valid, test;

  const std::vector<SynthSample<T>>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ValidationError("unknown split '" + name + "' (expected train, valid or test)");
  }
};

// Class-specific signal layout, fixed per seed.
struct Layout {
  std::vector<std::size_t> visual_block;            // class -> block index
  std::vector<std::vector<float>> visual_pattern;   // class -> +-amplitude per block value
  std::vector<double> tone_hz;                      // class -> frequency
  std::vector<std::vector<std::size_t>> motif;      // class -> token ids
};

inline constexpr double kVisualAmplitude = 0.25;
inline constexpr double kToneAmplitude = 0.5;
// Clutter amplitude is kVisualAmplitude * kClutterLevel / snr: equal to the
// class pattern at the default SNR of 5.
inline constexpr double kClutterLevel = 5.0;

inline Layout make_layout(const SynthSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, "synth/patterns");
  Layout l;
  std::vector<std::size_t> blocks(spec.visual_blocks());
  std::iota(blocks.begin(), blocks.end(), 0);
  std::shuffle(blocks.begin(), blocks.end(), rng);
  const std::size_t block_values = 4 * spec.patch * spec.patch * spec.channels;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    l.visual_block.push_back(blocks[c]);
    std::vector<float> pattern(block_values);
    for (auto& v : pattern) v = static_cast<float>(coin(rng) ? kVisualAmplitude : -kVisualAmplitude);
    l.visual_pattern.push_back(std::move(pattern));
    l.tone_hz.push_back(0.8 * (spec.sample_rate / 2.0) * static_cast<double>(c + 1) / static_cast<double>(spec.classes + 1));
  }
  std::vector<std::size_t> ids(spec.reserved_ids());
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    l.motif.emplace_back(ids.begin() + 3 * c, ids.begin() + 3 * c + spec.motif_len());
  }
  return l;
}

// Patch indices (row-major within image, images concatenated) of a 2x2 block.
inline std::vector<std::size_t> block_patches(const SynthSpec& spec, std::size_t block) {
  const std::size_t bw = spec.grid_w() / 2, per_image = (spec.grid_h() / 2) * bw;
  const std::size_t j = block / per_image, br = (block % per_image) / bw, bc = block % bw;
  std::vector<std::size_t> out;
  for (std::size_t dr = 0; dr < 2; ++dr)
    for (std::size_t dc = 0; dc < 2; ++dc)
      out.push_back(j * spec.patches_per_image() + (2 * br + dr) * spec.grid_w() + 2 * bc + dc);
  return out;
}

// Acoustic token interval [first, last) owned by class c.
inline std::pair<std::size_t, std::size_t> acoustic_interval(const SynthSpec& spec, std::size_t c) {
  const std::size_t m = spec.acoustic_tokens();
  return {c * m / spec.classes, (c + 1) * m / spec.classes};
}

inline std::size_t text_slot(const SynthSpec& spec, std::size_t c) { return c * (spec.text_len / spec.classes); }

template <class T>
SynthSample<T> generate_sample(const SynthSpec& spec, const Layout& layout, const std::string& id) {
  auto rng = make_rng(spec.seed, "synth/" + id);
  SynthSample<T> s;
  s.id = id;
  std::bernoulli_distribution pos(spec.positive_rate);
  for (std::size_t c = 0; c < spec.classes; ++c) s.label.push_back(pos(rng) ? 1 : 0);
  if (std::none_of(s.label.begin(), s.label.end(), [](int v) { return v == 1; })) {
    s.label[std::uniform_int_distribution<std::size_t>(0, spec.classes - 1)(rng)] = 1;
  }
  // present[c][m]: class c planted in modality m (visual, acoustic, textual).
  std::vector<std::array<bool, 3>> present(spec.classes, {false, false, false});
  std::bernoulli_distribution plant(spec.plant_rate);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    if (!s.label[c]) continue;
    for (auto& m : present[c]) m = plant(rng);
    if (!present[c][0] && !present[c][1] && !present[c][2]) present[c][std::uniform_int_distribution<int>(0, 2)(rng)] = true;
  }

  // Visual: mid-grey plus noise, distractors on unowned blocks, class pattern
  // added over its own block when planted.
  auto& v = s.visual;
  v.images = spec.images;
  v.height = spec.height;
  v.width = spec.width;
  v.channels = spec.channels;
  v.patch = spec.patch;
  v.pixels.resize(spec.images * spec.height * spec.width * spec.channels);
  std::normal_distribution<double> pixel_noise(0.0, kVisualAmplitude / spec.snr);
  for (auto& p : v.pixels) p = static_cast<T>(0.5 + pixel_noise(rng));
  const std::size_t P = spec.patch, C = spec.channels;
  auto add_block = [&](std::size_t block, auto&& value) {
    const auto patches = block_patches(spec, block);
    const std::size_t j = patches[0] / spec.patches_per_image();
    const std::size_t r0 = (patches[0] % spec.patches_per_image()) / spec.grid_w() * P;
    const std::size_t c0 = patches[0] % spec.grid_w() * P;
    std::size_t k = 0;
    for (std::size_t y = 0; y < 2 * P; ++y)
      for (std::size_t x = 0; x < 2 * P; ++x)
        for (std::size_t ch = 0; ch < C; ++ch, ++k)
          v.pixels[((j * spec.height + r0 + y) * spec.width + c0 + x) * C + ch] += static_cast<T>(value(k));
  };
  // Blocks no class owns carry fresh random patterns, so a plain average over
  // patches cannot separate the class pattern from clutter. Clutter is noise:
  // it shrinks with SNR like the pixel noise.
  std::vector<bool> owned(spec.visual_blocks(), false);
  for (auto b : layout.visual_block) owned[b] = true;
  std::bernoulli_distribution coin(0.5);
  const double clutter = kVisualAmplitude * kClutterLevel / spec.snr;
  for (std::size_t b = 0; b < spec.visual_blocks(); ++b) {
    if (!owned[b]) add_block(b, [&](std::size_t) { return coin(rng) ? clutter : -clutter; });
  }
  for (std::size_t c = 0; c < spec.classes; ++c) {
    if (!present[c][0]) continue;
    add_block(layout.visual_block[c], [&](std::size_t k) { return layout.visual_pattern[c][k]; });
    const auto patches = block_patches(spec, layout.visual_block[c]);
    s.planted.visual.insert(s.planted.visual.end(), patches.begin(), patches.end());
  }
  for (auto& p : v.pixels) p = std::clamp(p, T(0), T(1));

  // Acoustic: white noise plus a tone burst over the class interval.
  s.sample_rate = spec.sample_rate;
  s.waveform.resize(spec.samples());
  std::normal_distribution<double> audio_noise(0.0, kToneAmplitude / spec.snr);
  for (auto& x : s.waveform) x = static_cast<T>(audio_noise(rng));
  const auto hop = feat::frame_geometry(spec.sample_rate).hop;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    if (!present[c][1]) continue;
    const auto [first, last] = acoustic_interval(spec, c);
    const double ph = phase(rng), w = 2.0 * std::numbers::pi * layout.tone_hz[c] / spec.sample_rate;
    const std::size_t end = std::min(s.waveform.size(), 2 * last * hop);
    for (std::size_t i = 2 * first * hop; i < end; ++i) s.waveform[i] += static_cast<T>(kToneAmplitude * std::sin(w * i + ph));
    for (std::size_t t = first; t < last; ++t) s.planted.acoustic.push_back(t);
  }

  // Text: background ids outside the reserved range, class motifs at slot starts.
  std::uniform_int_distribution<std::size_t> background(spec.reserved_ids(), spec.vocab - 1);
  s.text_ids.resize(spec.text_len);
  for (auto& id_ : s.text_ids) id_ = background(rng);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    if (!present[c][2]) continue;
    for (std::size_t i = 0; i < layout.motif[c].size(); ++i) {
      s.text_ids[text_slot(spec, c) + i] = layout.motif[c][i];
      s.planted.textual.push_back(text_slot(spec, c) + i);
    }
  }
  std::sort(s.planted.visual.begin(), s.planted.visual.end());
  return s;
}

template <class T = float>
SynthDataset<T> generate(const SynthSpec& spec) {
  const auto layout = make_layout(spec);
  SynthDataset<T> ds;
  ds.spec = spec;
  auto fill = [&](std::vector<SynthSample<T>>& out, const char* split, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample<T>(spec, layout, std::string(split) + "/" + std::to_string(i)));
  };
  fill(ds.train, "train", spec.train);
  fill(ds.valid, "valid", spec.valid);
  fill(ds.test, "test", spec.test);
  return ds;
}

// Mean over the K rows of the weight placed on the planted columns.
template <class T>
double attention_mass_on_planted(const num::Tensor<T>& map, std::span<const std::size_t> planted) {
  if (map.dim() != 2 || map.rows() == 0) throw ValidationError("attention map must be a non-empty K x N matrix");
  std::vector<std::size_t> cols(planted.begin(), planted.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  for (auto c : cols) {
    if (c >= map.cols()) {
      throw ValidationError("planted index " + std::to_string(c) + " outside " + std::to_string(map.cols()) + " tokens");
    }
  }
  double total = 0;
  for (std::size_t k = 0; k < map.rows(); ++k)
    for (auto c : cols) total += static_cast<double>(map.at(k, c));
  return total / static_cast<double>(map.rows());
}

// Fixed affine rescaling of log-Mel energies so acoustic patches land near
// unit scale (the noise floor of the default spec sits around -2).
struct FeatureConfig {
  double pixel_offset = 0.5;  // centre the mid-grey background on zero
  double pixel_scale = 4.0;
  std::size_t mel_bins = 128;
  double fbank_offset = 0.0;
  double fbank_scale = 0.25;
};

template <class T>
FeaturizedSample<T> featurize(const SynthSample<T>& s, const FeatureConfig& cfg = {}) {
  FeaturizedSample<T> out;
  out.id = s.id;
  out.visual_patches = feat::split_image_patches(s.visual);
  for (auto& x : out.visual_patches.mutable_data()) x = static_cast<T>((x - cfg.pixel_offset) * cfg.pixel_scale);
  auto spec = feat::log_mel_fbank<T>(s.waveform, s.sample_rate, {.bins = cfg.mel_bins});
  for (auto& x : spec.values) x = static_cast<T>((x - cfg.fbank_offset) * cfg.fbank_scale);
  out.acoustic_patches = feat::split_spectrogram_patches(spec, feat::AcousticPatchMode::temporal, cfg.mel_bins);
  out.text_ids = s.text_ids;
  out.label = s.label;
  out.planted = s.planted;
  return out;
}

template <class T>
std::vector<FeaturizedSample<T>> featurize_all(const std::vector<SynthSample<T>>& samples, const FeatureConfig& cfg = {}) {
  std::vector<FeaturizedSample<T>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(featurize(s, cfg));
  return out;
}

// ---- JSON and on-disk layout ----------------------------------------------

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"classes", s.classes},   {"train", s.train},         {"valid", s.valid},
          {"test", s.test},         {"images", s.images},       {"height", s.height},
          {"width", s.width},       {"channels", s.channels},   {"patch", s.patch},
          {"audio_seconds", s.audio_seconds}, {"sample_rate", s.sample_rate}, {"text_len", s.text_len},
          {"vocab", s.vocab},       {"snr", s.snr},             {"positive_rate", s.positive_rate},
          {"plant_rate", s.plant_rate}, {"seed", s.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline SynthSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("synth spec: expected a JSON object");
  SynthSpec s;
  const auto known = to_json(s);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("synth spec: unknown key '" + key + "'");
    if (!value.is_number()) throw ValidationError("synth spec: '" + key + "' must be a number");
  }
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    using F = std::remove_reference_t<decltype(field)>;
    if constexpr (std::is_integral_v<F>) {
      if (!j[key].is_number_integer() || j[key].template get<double>() < 0) {
        throw ValidationError(std::string("synth spec: '") + key + "' must be a non-negative integer");
      }
    }
    field = j[key].template get<F>();
  };
  read("classes", s.classes);
  read("train", s.train);
  read("valid", s.valid);
  read("test", s.test);
  read("images", s.images);
  read("height", s.height);
  read("width", s.width);
  read("channels", s.channels);
  read("patch", s.patch);
  read("audio_seconds", s.audio_seconds);
  read("sample_rate", s.sample_rate);
  read("text_len", s.text_len);
  read("vocab", s.vocab);
  read("snr", s.snr);
  read("positive_rate", s.positive_rate);
  read("plant_rate", s.plant_rate);
  read("seed", s.seed);
  s.validate();
  return s;
}

// <dir>/manifest.json plus <split>/<index>.img / .wav binary files.
template <class T>
void write_dataset(const std::filesystem::path& dir, const SynthDataset<T>& ds) {
  namespace fs = std::filesystem;
  nlohmann::json splits = nlohmann::json::object();
  for (const char* name : {"train", "valid", "test"}) {
    fs::create_directories(dir / name);
    nlohmann::json rows = nlohmann::json::array();
    const auto& samples = ds.split(name);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const std::string stem = std::string(name) + "/" + std::to_string(i);
      io::write_images(dir / (stem + ".img"), s.visual);
      io::write_waveform(dir / (stem + ".wav"), s.waveform, s.sample_rate);
      rows.push_back({{"id", s.id},
                      {"image", stem + ".img"},
                      {"audio", stem + ".wav"},
                      {"text", s.text_ids},
                      {"label", s.label},
                      {"planted", {{"visual", s.planted.visual}, {"acoustic", s.planted.acoustic}, {"textual", s.planted.textual}}}});
    }
    splits[name] = std::move(rows);
  }
  nlohmann::json manifest = {{"format", "me2et-synth-v1"}, {"spec", to_json(ds.spec)}, {"splits", splits}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ValidationError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ValidationError("dataset not found: " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "me2et-synth-v1") throw ValidationError(path.string() + ": unrecognised format");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

template <class T>
SynthSample<T> read_sample(const std::filesystem::path& dir, const nlohmann::json& row, const SynthSpec& spec) {
  SynthSample<T> s;
  s.id = row.at("id").get<std::string>();
  s.visual = io::read_images<T>(dir / row.at("image").get<std::string>(), spec.patch);
  auto wave = io::read_waveform<T>(dir / row.at("audio").get<std::string>());
  s.waveform = std::move(wave.samples);
  s.sample_rate = wave.sample_rate;
  s.text_ids = row.at("text").get<std::vector<std::size_t>>();
  s.label = row.at("label").get<std::vector<int>>();
  const auto& p = row.at("planted");
  s.planted = {p.at("visual").get<std::vector<std::size_t>>(), p.at("acoustic").get<std::vector<std::size_t>>(),
               p.at("textual").get<std::vector<std::size_t>>()};
  return s;
}

template <class T>
SynthDataset<T> read_dataset(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  SynthDataset<T> ds;
  try {
    ds.spec = spec_from_json(manifest.at("spec"));
    for (const char* name : {"train", "valid", "test"}) {
      auto& out = std::string(name) == "train" ? ds.train : std::string(name) == "valid" ? ds.valid : ds.test;
      for (const auto& row : manifest.at("splits").at(name)) out.push_back(read_sample<T>(dir, row, ds.spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace me2et::synth
