#pragma once

// Distributional PPO with a distortion-risk critic and an uncertainty-driven
// risk schedule. One iteration:
//
//   collect_rollouts (alpha in force) -> update_risk (alpha for the next
//   collection) -> compute_gae -> actor_update -> critic_update -> t += 1
//
// The critic regresses raw quantiles; distortion is applied only when a value
// is read, so alpha can move between iterations without relearning.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskadapt/adam.hpp"
#include "riskadapt/mlp.hpp"
#include "riskadapt/policy.hpp"
#include "riskadapt/risk_core.hpp"
#include "riskadapt/vec_env.hpp"

namespace riskadapt {

enum class RiskMode { Adaptive, FixedNeutral, FixedAverse, FixedSeeking, ScalarPpo };

std::string to_string(RiskMode mode);
/// Accepts adaptive, fixed_neutral, fixed_averse, fixed_seeking, scalar_ppo.
RiskMode parse_risk_mode(std::string_view name);

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  int update_epochs = 4;
  std::size_t minibatch_size = 1024;
  double entropy_coeff = 0.005;
  double max_grad_norm = 1.0;
  std::size_t n_quantiles = 32;
  std::size_t rollout_length = 64;
  std::size_t n_envs = 64;
  std::int64_t total_iterations = 1000;
  RiskMode risk_mode = RiskMode::Adaptive;
  /// Wang level for the fixed modes; unset means 0.2 (averse) / -0.2 (seeking).
  std::optional<double> fixed_alpha;
  double alpha_0 = 0.0;
  double alpha_T = -0.2;
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  double init_log_std = 0.0;
  /// Multiplies environment rewards before they reach GAE and the critic.
  double reward_scale = 1.0;

  /// Throws ConfigError naming the offending key (relative to the algo section).
  void validate() const;
  /// 1 for scalar_ppo, n_quantiles otherwise.
  std::size_t effective_quantiles() const;
  /// Alpha of the fixed modes (0 for neutral and scalar_ppo).
  double mode_alpha() const;
  RiskSchedule schedule() const { return {alpha_0, alpha_T, total_iterations}; }
};

struct TrainState {
  GaussianPolicy policy;
  Mlp critic;
  AdamState actor_opt;
  AdamState log_std_opt;
  AdamState critic_opt;
  std::int64_t iteration = 0;
  double alpha = 0.0;
  double last_cv = 0.0;
  std::vector<std::mt19937_64> noise_rngs;  ///< one stream per env
  std::mt19937_64 shuffle_rng;
};

TrainState make_train_state(const PpoConfig& config, std::size_t actor_obs_dim, std::size_t privileged_obs_dim,
                            std::size_t action_dim, std::uint64_t seed);

/// Measure in force for the current alpha: Wang(alpha) for the adaptive and
/// fixed averse/seeking modes, Neutral for fixed_neutral and scalar_ppo.
DistortionMeasure current_measure(const TrainState& state, const PpoConfig& config);

/// Transitions stored time-major: column / index t * n_envs + e.
struct RolloutBatch {
  std::size_t n_envs = 0;
  std::size_t length = 0;
  Matrix actor_obs;
  Matrix privileged_obs;
  Matrix actions;
  Matrix quantiles;  ///< sorted critic atoms per transition
  std::vector<double> log_probs;
  std::vector<double> rewards;      ///< scaled by reward_scale
  std::vector<double> env_rewards;  ///< as returned by the environment
  std::vector<double> tracking;
  std::vector<double> values;  ///< distorted value V_alpha(s_t)
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> timeouts;
  std::vector<double> timeout_values;    ///< V_alpha of the truncated terminal state
  std::vector<double> bootstrap_values;  ///< V_alpha of each env's state after the last step
  double alpha = 0.0;
  DistortionMeasure measure;

  std::size_t size() const noexcept { return n_envs * length; }
};

RolloutBatch collect_rollouts(TrainState& state, VecEnv& envs, const PpoConfig& config);

struct GaeResult {
  std::vector<double> raw_advantages;
  std::vector<double> advantages;  ///< normalized to zero mean, unit std
  std::vector<double> value_targets;
};

/// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t), with a truncated
/// episode contributing gamma V(terminal) instead;
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; target = A_t + V(s_t).
GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda);

std::vector<double> normalize_advantages(std::span<const double> advantages);

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double clip_eps);

struct ActorLossGrad {
  double loss = 0.0;
  std::vector<double> mean_net_grad;
  std::vector<double> log_std_grad;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
};

/// Clipped-surrogate loss minus the entropy bonus over one minibatch, and its
/// gradient with respect to the policy parameters.
ActorLossGrad actor_loss_and_grad(const GaussianPolicy& policy, const Matrix& obs, const Matrix& actions,
                                  std::span<const double> old_log_probs, std::span<const double> advantages,
                                  double clip_eps, double entropy_coeff);

struct CriticLossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean quantile loss of the critic's sorted atoms against one scalar target
/// per column; the gradient is routed back through the sort.
CriticLossGrad critic_loss_and_grad(const Mlp& critic, const Matrix& obs, std::span<const double> targets);

struct ActorStats {
  double loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  double first_epoch_ratio = 0.0;
};

ActorStats actor_update(const RolloutBatch& batch, std::span<const double> advantages, TrainState& state,
                        const PpoConfig& config);

struct CriticStats {
  double loss = 0.0;
  double mean_cv = 0.0;
};

CriticStats critic_update(const RolloutBatch& batch, std::span<const double> value_targets, TrainState& state,
                          const PpoConfig& config);

/// Mean coefficient of variation over the batch's stored critic predictions.
double batch_cv(const RolloutBatch& batch);

/// Sets state.alpha and state.last_cv from the freshly collected batch and
/// returns the new alpha.
double update_risk(TrainState& state, const RolloutBatch& batch, const PpoConfig& config);

struct IterationStats {
  std::int64_t iteration = 0;
  double total_reward = 0.0;
  double tracking_reward = 0.0;
  double entropy = 0.0;
  double alpha = 0.0;
  double batch_cv = 0.0;
  double clip_fraction = 0.0;
  double critic_loss = 0.0;
  double mean_ratio = 0.0;
  double episodes_finished = 0.0;
};

IterationStats train_iteration(TrainState& state, VecEnv& envs, const PpoConfig& config);

}  // namespace riskadapt
