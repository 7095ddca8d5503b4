#pragma once

// Experiment configuration: three sections (env, algo, run) held in one JSON
// tree. Resolution order is built-in defaults, then the config file, then
// dotted-path overrides such as `algo.clip_eps=0.1`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskadapt/balancer.hpp"
#include "riskadapt/dppo.hpp"

namespace riskadapt::harness {

enum class EnvKind { Balancer, RiskyChoice };

std::string to_string(EnvKind kind);

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out;     ///< run directory; empty means $RISKADAPT_OUT (or ./runs) / run id
  std::string run_id;  ///< empty means "<risk_mode>_seed<seed>"
  std::int64_t checkpoint_interval = 100;
  std::int64_t eval_interval = 0;  ///< 0 disables evaluation during training
  std::size_t eval_envs = 256;
  int eval_steps = 500;
  std::vector<double> eval_velocities{-1.0, -0.8, -0.5, -0.2, 0.0, 0.2, 0.5, 0.8, 1.0};
  bool eval_pushes = false;  ///< keep the env's disturbance schedule during evaluation
  std::uint64_t eval_seed = 0;
  std::size_t workers = 1;
};

struct ExperimentConfig {
  EnvKind env_kind = EnvKind::Balancer;
  BalancerConfig env;
  PpoConfig algo;
  RunConfig run;

  /// Throws ConfigError with a fully dotted key.
  void validate() const;
  std::string resolved_run_id() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& config);
/// Strict: every leaf must be a known key of the right type.
ExperimentConfig from_json(const nlohmann::ordered_json& tree);

/// Sets one dotted key. The value is parsed as JSON when possible and taken
/// as a plain string otherwise.
void apply_override(nlohmann::ordered_json& tree, const std::string& assignment);

ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::string>& overrides);

/// Same, starting from an existing tree (e.g. one stored in a checkpoint).
ExperimentConfig resolve_config_tree(nlohmann::ordered_json tree, const std::vector<std::string>& overrides);

}  // namespace riskadapt::harness
