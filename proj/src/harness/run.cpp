#include "riskadapt/harness/run.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <tuple>

#include <fmt/format.h>
#include <openssl/sha.h>

#include "riskadapt/balancer.hpp"
#include "riskadapt/errors.hpp"
#include "riskadapt/harness/csv.hpp"
#include "riskadapt/risky_choice.hpp"
#include "riskadapt/rng.hpp"

#ifndef RISKADAPT_VERSION
#define RISKADAPT_VERSION "0.0.0"
#endif

namespace riskadapt::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string version_string() { return "riskadapt " RISKADAPT_VERSION; }

std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  std::string hex;
  for (unsigned char b : digest) hex += fmt::format("{:02x}", b);
  return hex;
}

fs::path default_output_root() {
  if (const char* env = std::getenv("RISKADAPT_OUT"); env && *env) return env;
  return "runs";
}

fs::path resolve_run_dir(const ExperimentConfig& config) {
  if (!config.run.out.empty()) return config.run.out;
  return default_output_root() / config.resolved_run_id();
}

std::unique_ptr<VecEnv> make_env(const ExperimentConfig& config) {
  const auto seed = derive_seed(config.run.seed, kStreamEnvReset);
  if (config.env_kind == EnvKind::RiskyChoice) return std::make_unique<RiskyChoiceVecEnv>(config.algo.n_envs, seed);
  return std::make_unique<BalancerVecEnv>(config.env, config.algo.n_envs, seed, config.run.workers);
}

TrainState make_initial_state(const ExperimentConfig& config) {
  const bool risky = config.env_kind == EnvKind::RiskyChoice;
  return make_train_state(config.algo, risky ? 3 : kBalancerActorObsDim, risky ? 3 : kBalancerPrivilegedObsDim, 1,
                          config.run.seed);
}

std::vector<std::string> stats_row(const IterationStats& s) {
  return {std::to_string(s.iteration), format_double(s.total_reward), format_double(s.tracking_reward),
          format_double(s.entropy),    format_double(s.alpha),        format_double(s.batch_cv),
          format_double(s.clip_fraction), format_double(s.critic_loss)};
}

std::vector<std::string> metrics_row(const MetricsRecord& r) {
  return {r.run_id,
          r.risk_mode,
          std::to_string(r.seed),
          r.target_velocity ? format_double(*r.target_velocity) : "aggregate",
          r.ood ? "1" : "0",
          format_double(r.success_rate),
          format_double(r.x_rmse),
          format_double(r.mean_return),
          format_double(r.mean_cv),
          format_double(r.success_drop)};
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_json(const MetricsRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["risk_mode"] = r.risk_mode;
  j["seed"] = r.seed;
  j["target_velocity"] = r.target_velocity ? json(*r.target_velocity) : json(nullptr);
  j["ood"] = r.ood;
  j["success_rate"] = number_or_null(r.success_rate);
  j["x_rmse"] = number_or_null(r.x_rmse);
  j["mean_return"] = number_or_null(r.mean_return);
  j["mean_cv"] = number_or_null(r.mean_cv);
  j["success_drop"] = number_or_null(r.success_drop);
  return j;
}

json stats_json(const IterationStats& s) {
  return json{{"iteration", s.iteration},         {"total_reward", s.total_reward},
              {"tracking_reward", s.tracking_reward}, {"entropy", s.entropy},
              {"alpha", s.alpha},                 {"batch_cv", s.batch_cv},
              {"clip_fraction", s.clip_fraction}, {"critic_loss", s.critic_loss}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_metrics(const fs::path& dir, const std::vector<MetricsRecord>& rows) {
  CsvWriter csv(dir / "metrics.csv", kMetricsHeader);
  json arr = json::array();
  for (const auto& r : rows) {
    csv.row(metrics_row(r));
    arr.push_back(metrics_json(r));
  }
  write_text(dir / "metrics.json", arr.dump(2) + "\n");
}

Checkpoint make_checkpoint(const TrainState& state, const ExperimentConfig& config) {
  Checkpoint c;
  c.policy = state.policy;
  c.critic = state.critic;
  c.actor_opt = state.actor_opt;
  c.log_std_opt = state.log_std_opt;
  c.critic_opt = state.critic_opt;
  c.iteration = state.iteration;
  c.alpha = state.alpha;
  c.last_cv = state.last_cv;
  c.config_json = to_json(config).dump(2);
  return c;
}

std::vector<MetricsRecord> evaluate_policy(const GaussianPolicy& policy, const Mlp& critic,
                                           const ExperimentConfig& config) {
  if (config.env_kind != EnvKind::Balancer) throw ConfigError("env.kind", "evaluation needs the balancer");
  EvalProtocol p;
  p.velocities = config.run.eval_velocities;
  p.n_envs = config.run.eval_envs;
  p.episode_steps = config.run.eval_steps;
  p.seed = config.run.eval_seed;
  if (!config.run.eval_pushes) {
    DisturbanceSchedule off = config.env.disturbance;
    off.enabled = false;
    p.disturbance = off;
  }
  auto rows = evaluate(mean_action_controller(policy), &critic, config.env, p);
  for (auto& r : rows) {
    r.run_id = config.resolved_run_id();
    r.risk_mode = to_string(config.algo.risk_mode);
    r.seed = config.run.seed;
  }
  return rows;
}

TrainingResult train_run(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  TrainingResult result;
  result.run_dir = resolve_run_dir(config);
  fs::create_directories(result.run_dir);
  const fs::path& dir = result.run_dir;

  const json tree = to_json(config);
  write_text(dir / "resolved_config.json", tree.dump(2) + "\n");
  const std::string version = version_string();
  write_text(dir / "version.txt", version + "\n" + git_blob_sha1(version) + "\n");

  auto env = make_env(config);
  result.state = make_initial_state(config);
  TrainState& state = result.state;
  env->reset();

  CsvWriter stats_csv(dir / "stats.csv", kStatsHeader);
  std::unique_ptr<CsvWriter> eval_csv;
  const bool do_eval = config.run.eval_interval > 0 && config.env_kind == EnvKind::Balancer;
  if (do_eval) {
    auto header = kMetricsHeader;
    header.insert(header.begin(), "iteration");
    eval_csv = std::make_unique<CsvWriter>(dir / "eval.csv", header);
  }

  const std::int64_t total = config.algo.total_iterations;
  std::int64_t last_checkpoint = -1;
  auto checkpoint = [&] {
    if (state.iteration == last_checkpoint) return;
    save_checkpoint(dir / fmt::format("checkpoint_{}.bin", state.iteration), make_checkpoint(state, config));
    last_checkpoint = state.iteration;
  };

  while (state.iteration < total) {
    IterationStats s;
    try {
      s = train_iteration(state, *env, config.algo);
    } catch (const NumericalAbort& e) {
      json diag;
      diag["iteration"] = state.iteration;
      diag["error"] = e.what();
      diag["alpha"] = number_or_null(state.alpha);
      diag["last_cv"] = number_or_null(state.last_cv);
      if (!result.stats.empty()) diag["last_stats"] = stats_json(result.stats.back());
      write_text(dir / "abort.json", diag.dump(2) + "\n");
      throw;
    }
    stats_csv.row(stats_row(s));
    result.stats.push_back(s);
    if (log && (state.iteration == 1 || state.iteration % 50 == 0 || state.iteration == total)) {
      *log << fmt::format("iter {:5d}  reward {:.4f}  tracking {:.4f}  alpha {:+.4f}  cv {:.4f}\n", s.iteration,
                          s.total_reward, s.tracking_reward, s.alpha, s.batch_cv);
    }
    if (config.run.checkpoint_interval > 0 && state.iteration % config.run.checkpoint_interval == 0) checkpoint();
    if (do_eval && (state.iteration % config.run.eval_interval == 0 || state.iteration == total)) {
      auto rows = evaluate_policy(state.policy, state.critic, config);
      for (const auto& r : rows) {
        auto cells = metrics_row(r);
        cells.insert(cells.begin(), std::to_string(state.iteration));
        eval_csv->row(cells);
      }
      if (state.iteration == total) result.final_eval = std::move(rows);
    }
  }
  checkpoint();
  if (!result.final_eval.empty()) write_metrics(dir, result.final_eval);

  json summary;
  summary["run_id"] = config.resolved_run_id();
  summary["risk_mode"] = to_string(config.algo.risk_mode);
  summary["seed"] = config.run.seed;
  summary["env_kind"] = to_string(config.env_kind);
  summary["iterations"] = state.iteration;
  summary["version"] = version;
  summary["version_sha1"] = git_blob_sha1(version);
  summary["final_alpha"] = number_or_null(state.alpha);
  if (!result.stats.empty()) summary["final_stats"] = stats_json(result.stats.back());
  if (config.env_kind == EnvKind::RiskyChoice) summary["risky_arm_probability"] = risky_arm_probability(state.policy);
  if (!result.final_eval.empty()) summary["final_eval"] = metrics_json(result.final_eval.back());
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return result;
}

LoadedRun load_run(const fs::path& checkpoint, const std::vector<std::string>& overrides) {
  LoadedRun run;
  run.checkpoint = load_checkpoint(checkpoint);
  const json tree = json::parse(run.checkpoint.config_json, nullptr, false);
  if (tree.is_discarded()) throw ConfigError("checkpoint", "stored configuration is not valid JSON");
  run.config = resolve_config_tree(tree, overrides);
  const bool risky = run.config.env_kind == EnvKind::RiskyChoice;
  const std::size_t actor_in = risky ? 3 : kBalancerActorObsDim;
  const std::size_t critic_in = risky ? 3 : kBalancerPrivilegedObsDim;
  const auto& actor = run.checkpoint.policy.mean_net;
  const auto& critic = run.checkpoint.critic;
  if (actor.input_dim() != actor_in || actor.output_dim() != 1) {
    throw ConfigError("checkpoint", fmt::format("actor is {}->{}, environment needs {}->1", actor.input_dim(),
                                                actor.output_dim(), actor_in));
  }
  if (critic.input_dim() != critic_in) {
    throw ConfigError("checkpoint",
                      fmt::format("critic input is {}, environment provides {}", critic.input_dim(), critic_in));
  }
  if (critic.output_dim() != run.config.algo.effective_quantiles()) {
    throw ConfigError("algo.n_quantiles", fmt::format("checkpoint critic has {} quantiles, configuration says {}",
                                                      critic.output_dim(), run.config.algo.effective_quantiles()));
  }
  return run;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<RiskMode>& modes,
                                 const std::vector<std::uint64_t>& seeds, const fs::path& out_root,
                                 std::ostream* log) {
  fs::create_directories(out_root);
  std::vector<SweepCell> cells;
  for (RiskMode mode : modes) {
    for (std::uint64_t seed : seeds) {
      SweepCell cell;
      cell.mode = mode;
      cell.seed = seed;
      ExperimentConfig config = base;
      config.algo.risk_mode = mode;
      // A fixed level only makes sense for the mode it was written for.
      if (mode != base.algo.risk_mode) config.algo.fixed_alpha.reset();
      config.run.seed = seed;
      config.run.run_id = to_string(mode) + "_seed" + std::to_string(seed);
      config.run.out = (out_root / config.run.run_id).string();
      cell.run_dir = config.run.out;
      if (log) *log << "== " << config.run.run_id << "\n";
      try {
        train_run(config, log);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.message = e.what();
        if (log) *log << "cell failed: " << e.what() << "\n";
      }
      cells.push_back(std::move(cell));
    }
  }
  CsvWriter csv(out_root / "cells.csv", {"mode", "seed", "status", "run_dir", "message"});
  for (const auto& c : cells) {
    std::string msg = c.message;
    for (char& ch : msg)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    csv.row({to_string(c.mode), std::to_string(c.seed), c.ok ? "ok" : "failed", c.run_dir.string(), msg});
  }
  write_sweep_summary(cells, out_root / "sweep.csv");
  return cells;
}

void write_sweep_summary(const std::vector<SweepCell>& cells, const fs::path& path) {
  // (mode order, iteration, metric order) -> samples
  std::vector<std::string> mode_names;
  std::vector<std::string> metric_names;
  std::map<std::tuple<std::size_t, std::int64_t, std::size_t>, std::vector<double>> samples;
  auto index_of = [](std::vector<std::string>& names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    names.push_back(name);
    return names.size() - 1;
  };
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const std::size_t m = index_of(mode_names, to_string(c.mode));
    const CsvTable stats = read_csv(c.run_dir / "stats.csv");
    const std::size_t it_col = stats.column("iteration");
    for (std::size_t col = 0; col < stats.header.size(); ++col) {
      if (col == it_col) continue;
      const std::size_t k = index_of(metric_names, stats.header[col]);
      for (std::size_t r = 0; r < stats.rows.size(); ++r) {
        const auto it = static_cast<std::int64_t>(stats.number(r, it_col));
        samples[{m, it, k}].push_back(stats.number(r, col));
      }
    }
    if (fs::exists(c.run_dir / "eval.csv")) {
      const CsvTable ev = read_csv(c.run_dir / "eval.csv");
      const std::size_t it_col_e = ev.column("iteration"), v_col = ev.column("target_velocity");
      for (const char* metric : {"success_rate", "x_rmse", "mean_return", "mean_cv"}) {
        const std::size_t col = ev.column(metric);
        const std::size_t k = index_of(metric_names, std::string("eval_") + metric);
        for (std::size_t r = 0; r < ev.rows.size(); ++r) {
          if (ev.rows[r][v_col] != "aggregate") continue;
          // Evaluation happens after the iteration completes; key it by the last stats index.
          const auto it = static_cast<std::int64_t>(ev.number(r, it_col_e)) - 1;
          samples[{m, it, k}].push_back(ev.number(r, col));
        }
      }
    }
  }
  CsvWriter csv(path, {"mode", "iteration", "metric", "mean", "stderr", "n"});
  for (const auto& [key, xs] : samples) {
    const auto& [m, it, k] = key;
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double se = 0.0;
    if (xs.size() > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    csv.row({mode_names[m], std::to_string(it), metric_names[k], format_double(mean), format_double(se),
             std::to_string(xs.size())});
  }
}

}  // namespace riskadapt::harness
