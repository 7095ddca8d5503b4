#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "riskadapt/checkpoint.hpp"
#include "riskadapt/dppo.hpp"
#include "riskadapt/evaluate.hpp"
#include "riskadapt/harness/config.hpp"
#include "riskadapt/vec_env.hpp"

namespace riskadapt::harness {

std::string version_string();
/// SHA-1 of "blob <len>\0<content>", as git hashes file contents.
std::string git_blob_sha1(const std::string& content);

/// $RISKADAPT_OUT when set, ./runs otherwise.
std::filesystem::path default_output_root();
std::filesystem::path resolve_run_dir(const ExperimentConfig& config);

std::unique_ptr<VecEnv> make_env(const ExperimentConfig& config);
TrainState make_initial_state(const ExperimentConfig& config);

inline const std::vector<std::string> kStatsHeader{"iteration", "total_reward", "tracking_reward", "entropy",
                                                   "alpha",     "batch_cv",     "clip_fraction",   "critic_loss"};
std::vector<std::string> stats_row(const IterationStats& s);

inline const std::vector<std::string> kMetricsHeader{"run_id",      "risk_mode",   "seed",        "target_velocity",
                                                     "ood",         "success_rate", "x_rmse",     "mean_return",
                                                     "mean_cv",     "success_drop"};
std::vector<std::string> metrics_row(const MetricsRecord& r);
void write_metrics(const std::filesystem::path& dir, const std::vector<MetricsRecord>& rows);

Checkpoint make_checkpoint(const TrainState& state, const ExperimentConfig& config);

struct TrainingResult {
  std::filesystem::path run_dir;
  std::vector<IterationStats> stats;
  TrainState state;
  std::vector<MetricsRecord> final_eval;  ///< empty unless run.eval_interval > 0
};

/// Runs the full training loop and writes stats.csv, resolved_config.json,
/// version.txt, checkpoints and summary.json into the run directory. A
/// non-finite value writes abort.json and rethrows NumericalAbort.
TrainingResult train_run(const ExperimentConfig& config, std::ostream* log = nullptr);

struct LoadedRun {
  Checkpoint checkpoint;
  ExperimentConfig config;
};

/// Loads a checkpoint and re-resolves its stored configuration with
/// `overrides`. Network shapes that do not fit the environment raise
/// ConfigError.
LoadedRun load_run(const std::filesystem::path& checkpoint, const std::vector<std::string>& overrides);

/// Velocity-grid evaluation with the run section's protocol, identity
/// columns filled in.
std::vector<MetricsRecord> evaluate_policy(const GaussianPolicy& policy, const Mlp& critic,
                                           const ExperimentConfig& config);

struct SweepCell {
  RiskMode mode = RiskMode::Adaptive;
  std::uint64_t seed = 0;
  std::filesystem::path run_dir;
  bool ok = false;
  std::string message;
};

/// Trains every (mode, seed) cell under `out_root`, continuing past failed
/// cells, then writes cells.csv and the long-format sweep.csv.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<RiskMode>& modes,
                                 const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_root,
                                 std::ostream* log = nullptr);

/// mode,iteration,metric,mean,stderr,n over the successful cells; stderr is
/// the sample standard deviation over sqrt(n), 0 for a single seed.
void write_sweep_summary(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

}  // namespace riskadapt::harness
