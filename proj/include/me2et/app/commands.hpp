#pragma once

// Command implementations behind the me2et_cli verbs. Each returns the process
// exit code: 0 success, 1 check failure, 2 usage or input error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "me2et/checkpoint.hpp"
#include "me2et/complexity.hpp"
#include "me2et/config.hpp"
#include "me2et/gradcheck_suite.hpp"
#include "me2et/synthdata.hpp"
#include "me2et/training.hpp"

namespace me2et::app {

namespace fs = std::filesystem;

inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kInputError = 2;

// Runs `body`, mapping input errors to exit code 2 with a one-line message.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kInputError;
}

// ---- synth -------------------------------------------------------------

struct SynthOptions {
  std::optional<std::string> spec_path;
  std::string out_dir = "synth";
};

inline int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto spec = opt.spec_path ? synth::spec_from_json(read_json_file(*opt.spec_path)) : synth::SynthSpec{};
    spec.validate();
    const auto ds = synth::generate<float>(spec);
    synth::write_dataset(opt.out_dir, ds);
    out << "wrote " << ds.train.size() << " train, " << ds.valid.size() << " valid, " << ds.test.size()
        << " test samples to " << opt.out_dir << "\n";
    return kOk;
  });
}

// ---- shared loading ----------------------------------------------------

struct RunOverrides {
  std::optional<std::string> dataset;
  std::optional<std::string> output_dir;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

inline RunConfig load_run_config(const std::string& path, const RunOverrides& o) {
  auto cfg = run_config_from_json(read_json_file(path));
  if (o.dataset) cfg.dataset = *o.dataset;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.variant) cfg.variant = parse_variant(*o.variant);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.optimizer.epochs = *o.epochs;
  cfg.validate();
  if (cfg.dataset.empty()) throw ValidationError("run config: no dataset given");
  return cfg;
}

// Everything a command needs, validated before any model memory is allocated.
struct Prepared {
  RunConfig config;
  ModelConfig model;
  synth::SynthSpec spec;
};

inline Prepared prepare(const RunConfig& cfg) {
  const auto manifest = synth::read_manifest(cfg.dataset);
  const auto spec = synth::spec_from_json(manifest.at("spec"));
  return {cfg, cfg.model_config(spec), spec};
}

inline FeaturizedSplits<float> load_features(const Prepared& p) {
  return featurize_dataset(synth::read_dataset<float>(p.config.dataset), p.config.features);
}

inline std::string default_checkpoint(const RunConfig& cfg) { return (fs::path(cfg.output_dir) / "model.ckpt").string(); }

// ---- train -------------------------------------------------------------

struct TrainOptions {
  std::string config_path;
  RunOverrides overrides;
  bool quiet = false;
};

inline int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto p = prepare(load_run_config(opt.config_path, opt.overrides));
    const auto data = load_features(p);
    fs::create_directories(p.config.output_dir);
    const fs::path dir(p.config.output_dir);
    {
      std::ofstream cfg_out(dir / "config.json");
      cfg_out << to_json(p.config).dump(2) << "\n";
    }
    std::ofstream log(dir / "train_log.csv");
    if (!log) throw ValidationError("cannot write " + (dir / "train_log.csv").string());
    log << epoch_log_header() << "\n";
    if (!opt.quiet) out << "variant " << to_string(p.config.variant) << ", pool FLOPs per sample "
                        << cost::flops_model(p.model, {p.model.visual_tokens, p.model.acoustic_tokens, p.model.text_tokens}).pools
                        << "\n" << epoch_log_header() << "\n";
    Me2etModel<float> model(p.model, p.config.seed);
    train_model<float>(model, p.config, data, [&](const EpochLog& e) {
      log << to_csv(e) << "\n";
      log.flush();
      if (!opt.quiet) out << to_csv(e) << "\n";
    });
    ckpt::save(default_checkpoint(p.config), model.parameters());
    const auto test = evaluate<float>(model, data.test, p.config.threshold).report.average;
    out << "test accuracy " << test.accuracy << " weighted_accuracy " << test.weighted_accuracy << " f1 " << test.f1 << "\n";
    out << "checkpoint " << default_checkpoint(p.config) << "\n";
    return kOk;
  });
}

// ---- eval --------------------------------------------------------------

struct EvalOptions {
  std::string config_path;
  RunOverrides overrides;
  std::optional<std::string> checkpoint;
  std::string split = "test";
  std::optional<std::string> out_path;
};

inline Me2etModel<float> load_model(const Prepared& p, const std::string& checkpoint) {
  Me2etModel<float> model(p.model, p.config.seed);
  auto params = model.parameters();
  ckpt::load(checkpoint, params);
  return model;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto p = prepare(load_run_config(opt.config_path, opt.overrides));
    if (opt.split != "train" && opt.split != "valid" && opt.split != "test") {
      throw ValidationError("unknown split '" + opt.split + "' (expected train, valid or test)");
    }
    const auto path = opt.checkpoint.value_or(default_checkpoint(p.config));
    if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + path);
    const auto model = load_model(p, path);
    const auto data = load_features(p);
    const auto csv = metrics_csv(evaluate<float>(model, data.split(opt.split), p.config.threshold).report);
    if (opt.out_path) {
      std::ofstream f(*opt.out_path);
      if (!f) throw ValidationError("cannot write " + *opt.out_path);
      f << csv;
    } else {
      out << csv;
    }
    return kOk;
  });
}

// ---- gradcheck ---------------------------------------------------------

struct GradCheckOptions {
  double tolerance = 1e-4;
  std::optional<std::string> inject_fault;  // test fixture: corrupt one case's backward
};

inline int cmd_gradcheck(const GradCheckOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto rows = run_gradcheck_suite(opt.tolerance, opt.inject_fault);
    out << "op,coordinates,max_rel_error,status\n";
    std::size_t passed = 0;
    for (const auto& r : rows) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_error);
      out << r.name << "," << r.coordinates << "," << buf << "," << (r.passed ? "pass" : "FAIL") << "\n";
      passed += r.passed ? 1 : 0;
    }
    out << "gradcheck: " << passed << "/" << rows.size() << " passed at tolerance " << opt.tolerance << "\n";
    return passed == rows.size() ? kOk : kCheckFailed;
  });
}

// ---- bench -------------------------------------------------------------

struct BenchOptions {
  std::string mode = "flops";  // flops | time | memory
  std::vector<std::size_t> ks{32};
  cost::Lengths lengths;
  std::string variant = "both";  // full | no_attention | both
  bool paper_scale = false;
  std::size_t runs = 100;
  std::uint64_t seed = 0;
  std::optional<std::string> out_path;
};

inline std::string bench_header() { return "variant,K,Q,M,flops_total,time_mean_s,time_std_s,peak_bytes,flops_ratio"; }

// One row per (variant, K). flops_ratio is no_attention FLOPs over the row's
// FLOPs; time and memory columns are filled only in their own mode.
inline int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.mode != "flops" && opt.mode != "time" && opt.mode != "memory") {
      throw ValidationError("bench: --mode must be flops, time or memory");
    }
    std::vector<Variant> variants;
    if (opt.variant == "both") {
      variants = {Variant::full, Variant::no_attention};
    } else {
      variants = {parse_variant(opt.variant)};
    }
    if (opt.ks.empty()) throw ValidationError("bench: --k needs at least one value");
    for (auto k : opt.ks) {
      if (k == 0) throw ValidationError("bench: K must be at least 1");
    }
    if (opt.lengths.visual == 0 || opt.lengths.acoustic == 0 || opt.lengths.text == 0) {
      throw ValidationError("bench: lengths must be positive");
    }
    if (opt.runs == 0) throw ValidationError("bench: --runs must be at least 1");
    auto make = [&](Variant v, std::size_t k) {
      return opt.paper_scale ? cost::paper_scale_model(v, k, opt.lengths) : cost::desk_bench_model(v, k, opt.lengths);
    };
    std::string csv = bench_header() + "\n";
    for (auto v : variants) {
      for (auto k : opt.ks) {
        const auto m = make(v, k);
        m.validate();
        const auto flops = cost::flops_model(m, opt.lengths).total();
        const auto baseline = cost::flops_model(make(Variant::no_attention, k), opt.lengths).total();
        std::string time_mean, time_std, peak;
        if (opt.mode == "time") {
          const auto r = cost::bench_time<float>(m, opt.lengths, opt.runs, opt.seed);
          char a[32], b[32];
          std::snprintf(a, sizeof a, "%.6f", r.mean_s);
          std::snprintf(b, sizeof b, "%.6f", r.std_s);
          time_mean = a, time_std = b;
        } else if (opt.mode == "memory") {
          peak = std::to_string(cost::bench_memory<float>(m, opt.lengths, opt.seed));
        }
        char ratio[32];
        std::snprintf(ratio, sizeof ratio, "%.6f", static_cast<double>(baseline) / static_cast<double>(flops));
        csv += std::string(to_string(v)) + "," + std::to_string(k) + "," + std::to_string(opt.lengths.visual) + "," +
               std::to_string(opt.lengths.acoustic) + "," + std::to_string(flops) + "," + time_mean + "," + time_std + "," +
               peak + "," + ratio + "\n";
      }
    }
    if (opt.out_path) {
      std::ofstream f(*opt.out_path);
      if (!f) throw ValidationError("cannot write " + *opt.out_path);
      f << csv;
    } else {
      out << csv;
    }
    return kOk;
  });
}

// ---- attn-dump ---------------------------------------------------------

struct AttnDumpOptions {
  std::string config_path;
  RunOverrides overrides;
  std::optional<std::string> checkpoint;
  std::optional<std::string> sample;  // "<split>/<index>"
  std::string split = "test";          // summary split when no sample is given
  std::string out_dir = "attention";
};

// K x N map as CSV, one row per pooled token.
template <class T>
void write_map_csv(const fs::path& path, const num::Tensor<T>& map) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t c = 0; c < map.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.8g", static_cast<double>(map.at(r, c)));
      f << (c ? "," : "") << buf;
    }
    f << "\n";
  }
}

// Binary PGM, one pixel per weight, scaled so the largest weight is white.
template <class T>
void write_map_pgm(const fs::path& path, const num::Tensor<T>& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << "P5\n" << map.cols() << " " << map.rows() << "\n255\n";
  double top = 0;
  for (auto v : map.data()) top = std::max(top, static_cast<double>(v));
  for (auto v : map.data()) {
    const auto px = static_cast<unsigned char>(top > 0 ? std::lround(255.0 * static_cast<double>(v) / top) : 0);
    f.put(static_cast<char>(px));
  }
}

inline int cmd_attn_dump(const AttnDumpOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto p = prepare(load_run_config(opt.config_path, opt.overrides));
    const auto path = opt.checkpoint.value_or(default_checkpoint(p.config));
    if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + path);
    std::string split = opt.split;
    std::optional<std::size_t> index;
    if (opt.sample) {
      const auto slash = opt.sample->find('/');
      if (slash == std::string::npos) throw ValidationError("sample id must look like <split>/<index>, got '" + *opt.sample + "'");
      split = opt.sample->substr(0, slash);
      try {
        index = std::stoul(opt.sample->substr(slash + 1));
      } catch (const std::exception&) {
        throw ValidationError("sample id must look like <split>/<index>, got '" + *opt.sample + "'");
      }
    }
    const auto model = load_model(p, path);
    const auto data = load_features(p);
    const auto& samples = data.split(split);
    if (!index) {
      const auto m = planted_mass<float>(model, samples);
      out << "summary split=" << split << " samples=" << m.samples << " visual_pass1=" << m.visual_pass1
          << " acoustic=" << m.acoustic << " visual_pass2=" << m.visual_pass2 << " uniform_visual=" << m.uniform_visual << "\n";
      return kOk;
    }
    if (*index >= samples.size()) {
      throw ValidationError("sample " + *opt.sample + " not found (" + split + " has " + std::to_string(samples.size()) + " samples)");
    }
    const auto& s = samples[*index];
    num::NoGradScope<float> no_grad;
    const auto r = model.forward(s);
    fs::create_directories(opt.out_dir);
    out << "summary sample=" << s.id;
    for (const auto& map : r.state.maps) {
      const std::string stem = std::string(to_string(map.pass));
      write_map_csv(fs::path(opt.out_dir) / (stem + ".csv"), map.weights);
      write_map_pgm(fs::path(opt.out_dir) / (stem + ".pgm"), map.weights);
      const auto& planted = map.modality == Modality::acoustic ? s.planted.acoustic : s.planted.visual;
      const double mass = planted.empty() ? 0.0 : synth::attention_mass_on_planted(map.weights, std::span<const std::size_t>(planted));
      out << " " << stem << "=" << mass;
    }
    out << " uniform_visual=" << static_cast<double>(s.planted.visual.size()) / static_cast<double>(s.visual_patches.rows()) << "\n";
    return kOk;
  });
}

}  // namespace me2et::app
