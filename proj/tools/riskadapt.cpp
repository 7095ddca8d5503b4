#include <iostream>

#include <CLI11.hpp>

#include "riskadapt/harness/commands.hpp"

using namespace riskadapt::harness;

namespace {

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "configuration file (JSON)");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--override", o.overrides, "section.key=value, repeatable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riskadapt: distributional PPO with adaptive risk"};
  app.require_subcommand(1);

  CommonOptions train;
  add_common(app.add_subcommand("train", "train one run"), train);

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over a velocity grid");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--velocities", eval.velocities, "comma separated target velocities");
  eval_cmd->add_option("--seed", eval.seed, "evaluation seed");
  eval_cmd->add_option("--out", eval.out, "output directory");
  eval_cmd->add_option("--override", eval.overrides, "section.key=value, repeatable");

  DisturbOptions disturb;
  auto* dist_cmd = app.add_subcommand("disturb", "zero-command evaluation with scheduled pushes");
  dist_cmd->add_option("--checkpoint", disturb.checkpoint, "checkpoint file")->required();
  dist_cmd->add_option("--seed", disturb.seed, "evaluation seed");
  dist_cmd->add_option("--out", disturb.out, "output directory");
  dist_cmd->add_option("--override", disturb.overrides, "section.key=value, repeatable");
  dist_cmd->add_option("--push-interval", disturb.interval, "seconds between push onsets");
  dist_cmd->add_option("--push-duration", disturb.duration, "push length in seconds");
  dist_cmd->add_option("--push-magnitudes", disturb.magnitudes, "comma separated forces (N), used cyclically");
  dist_cmd->add_flag("--no-push", disturb.no_push, "disable pushes");
  dist_cmd->add_option("--steps", disturb.steps, "episode length in steps")->capture_default_str();
  dist_cmd->add_option("--envs", disturb.envs, "parallel episodes")->capture_default_str();
  dist_cmd->add_option("--velocity", disturb.velocity, "commanded velocity")->capture_default_str();

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "train a risk-mode x seed matrix");
  add_common(sweep_cmd, sweep.common);
  sweep_cmd->add_option("--modes", sweep.modes, "comma separated risk modes")->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep.seeds, "comma separated seeds")->capture_default_str();

  PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plot", "render CSV outputs as SVG");
  plot_cmd->add_option("--kind", plot.kind, "learning-curves | velocity-sweep | cv-trace")->required();
  plot_cmd->add_option("--out", plot.out, "SVG file")->required();
  plot_cmd->add_option("--metric", plot.metric, "column or metric to plot");
  plot_cmd->add_option("inputs", plot.inputs, "CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (app.got_subcommand("train")) return cmd_train(train, std::cout, std::cerr);
  if (app.got_subcommand("eval")) return cmd_eval(eval, std::cout, std::cerr);
  if (app.got_subcommand("disturb")) return cmd_disturb(disturb, std::cout, std::cerr);
  if (app.got_subcommand("sweep")) return cmd_sweep(sweep, std::cout, std::cerr);
  return cmd_plot(plot, std::cout, std::cerr);
}
