#include <CLI11.hpp>

#include "../src/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"distributionally robust optimization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  dro::cli::CommonOptions opts;
  std::uint64_t seed = 0;
  std::string out_dir;
  double perturbation = 0.0;

  const auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) cmd->add_option("--config", config_path, "JSON config path")->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out_dir, "override the output directory");
  };

  auto* run = app.add_subcommand("run", "optimization run(s) from a config");
  add_common(run, true);
  run->add_flag("--tune", opts.tune, "coarse-to-fine step-size search before the final run");
  run->add_option("--jobs", opts.jobs, "parallel sweep entries");
  run->add_flag("--timing", opts.timing, "record per-row wall_ms in trace CSVs");

  auto* bias = app.add_subcommand("bias-sweep", "surrogate bias across batch sizes");
  add_common(bias, true);

  auto* bench = app.add_subcommand("estimator-bench", "MLMC cost/unbiasedness/moment table");
  add_common(bench, true);

  auto* verify = app.add_subcommand("verify", "run the oracle and property suite");
  verify->add_option("--inject-perturbation", perturbation,
                     "test-only hook: shift solver outputs to confirm detection");

  CLI11_PARSE(app, argc, argv);

  if (run->count("--seed") || bias->count("--seed") || bench->count("--seed"))
    opts.seed_override = seed;
  if (run->count("--out") || bias->count("--out") || bench->count("--out"))
    opts.out_override = out_dir;

  if (app.got_subcommand(run)) return dro::cli::cmd_run(config_path, opts);
  if (app.got_subcommand(bias)) return dro::cli::cmd_bias_sweep(config_path, opts);
  if (app.got_subcommand(bench)) return dro::cli::cmd_estimator_bench(config_path, opts);
  return dro::cli::cmd_verify(perturbation);
}
