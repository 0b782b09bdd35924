#include <iostream>

#include <CLI11.hpp>

#include "me2et/app/commands.hpp"

using namespace me2et;

namespace {

void add_run_options(CLI::App* cmd, std::string& config, app::RunOverrides& o) {
  cmd->add_option("--config", config, "Run configuration JSON")->required();
  cmd->add_option("--dataset", o.dataset, "Dataset directory (overrides config)");
  cmd->add_option("--output-dir", o.output_dir, "Run directory (overrides config)");
  cmd->add_option("--variant", o.variant, "full, no_two_pass, no_attention or no_feature_fusion");
  cmd->add_option("--seed", o.seed, "Run seed (overrides config)");
  cmd->add_option("--epochs", o.epochs, "Epoch count (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Progressive tri-modal attention transformer: data, training, checks and benchmarks"};
  cli.require_subcommand(1);

  app::SynthOptions synth_opt;
  auto* synth = cli.add_subcommand("synth", "Generate a synthetic tri-modal dataset");
  synth->add_option("--spec", synth_opt.spec_path, "Synthetic spec JSON (defaults when omitted)");
  synth->add_option("--out", synth_opt.out_dir, "Output directory");

  app::TrainOptions train_opt;
  auto* train = cli.add_subcommand("train", "Train a model and write checkpoint and log");
  add_run_options(train, train_opt.config_path, train_opt.overrides);
  train->add_flag("--quiet", train_opt.quiet, "Only print the final summary");

  app::EvalOptions eval_opt;
  auto* eval = cli.add_subcommand("eval", "Per-class metrics CSV for a checkpoint");
  add_run_options(eval, eval_opt.config_path, eval_opt.overrides);
  eval->add_option("--checkpoint", eval_opt.checkpoint, "Checkpoint (default <output_dir>/model.ckpt)");
  eval->add_option("--split", eval_opt.split, "train, valid or test");
  eval->add_option("--out", eval_opt.out_path, "Write CSV here instead of stdout");

  app::GradCheckOptions grad_opt;
  auto* grad = cli.add_subcommand("gradcheck", "Finite-difference check of every primitive and the tiny model");
  grad->add_option("--tolerance", grad_opt.tolerance, "Relative error tolerance");
  grad->add_option("--inject-fault", grad_opt.inject_fault, "Test fixture: corrupt the backward of the named case");

  app::BenchOptions bench_opt;
  std::vector<std::size_t> lengths;
  auto* bench = cli.add_subcommand("bench", "FLOPs, wall-clock or peak-memory comparison");
  bench->add_option("--mode", bench_opt.mode, "flops, time or memory")->check(CLI::IsMember({"flops", "time", "memory"}));
  bench->add_option("--k", bench_opt.ks, "Pooled token counts")->delimiter(',');
  bench->add_option("--lengths", lengths, "Q,M,N_text token counts")->delimiter(',')->expected(3);
  bench->add_option("--variant", bench_opt.variant, "full, no_attention or both");
  bench->add_flag("--paper-scale", bench_opt.paper_scale, "d=768, 12 heads, 12 layers instead of the desk config");
  bench->add_option("--runs", bench_opt.runs, "Timed repetitions (time mode)");
  bench->add_option("--seed", bench_opt.seed, "Seed for weights and inputs");
  bench->add_option("--out", bench_opt.out_path, "Write CSV here instead of stdout");

  app::AttnDumpOptions attn_opt;
  auto* attn = cli.add_subcommand("attn-dump", "Dump attention maps of one sample, or planted-mass summary of a split");
  add_run_options(attn, attn_opt.config_path, attn_opt.overrides);
  attn->add_option("--checkpoint", attn_opt.checkpoint, "Checkpoint (default <output_dir>/model.ckpt)");
  attn->add_option("--sample", attn_opt.sample, "Sample id <split>/<index>");
  attn->add_option("--split", attn_opt.split, "Split summarised when no sample is given");
  attn->add_option("--out", attn_opt.out_dir, "Directory for CSV and PGM maps");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kInputError;
  }

  if (!lengths.empty()) bench_opt.lengths = {lengths[0], lengths[1], lengths[2]};
  if (*synth) return app::cmd_synth(synth_opt, std::cout, std::cerr);
  if (*train) return app::cmd_train(train_opt, std::cout, std::cerr);
  if (*eval) return app::cmd_eval(eval_opt, std::cout, std::cerr);
  if (*grad) return app::cmd_gradcheck(grad_opt, std::cout, std::cerr);
  if (*bench) return app::cmd_bench(bench_opt, std::cout, std::cerr);
  if (*attn) return app::cmd_attn_dump(attn_opt, std::cout, std::cerr);
  return app::kInputError;
}
