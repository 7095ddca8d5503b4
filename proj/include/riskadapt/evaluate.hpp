#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "riskadapt/balancer.hpp"
#include "riskadapt/mlp.hpp"
#include "riskadapt/policy.hpp"

namespace riskadapt {

/// Maps a batch of actor observations (feature-major) to actions.
using Controller = std::function<Matrix(const Matrix& actor_obs)>;

/// Deterministic controller: the policy's mean action.
Controller mean_action_controller(const GaussianPolicy& policy);

struct CvTraceSample {
  double time = 0.0;                ///< seconds since reset
  double mean_cv = 0.0;             ///< over envs still running
  double velocity_deviation = 0.0;  ///< mean |v - vx_c| over envs still running
  bool push_active = false;
};
using CvTrace = std::vector<CvTraceSample>;

struct EpisodeSummary {
  double success_rate = 0.0;  ///< episodes that reached the horizon without a crash
  double x_rmse = 0.0;        ///< RMS of v - vx_c over all executed steps
  double mean_return = 0.0;
  double mean_cv = 0.0;  ///< NaN unless a critic was given
  CvTrace trace;         ///< filled when a critic was given
};

/// Runs `n_envs` episodes of `episode_steps` in lockstep with the command
/// pinned to `velocity`. Crashed envs stop; nothing is auto-reset.
EpisodeSummary run_episodes(const Controller& controller, const Mlp* critic, const BalancerConfig& config,
                            double velocity, std::size_t n_envs, int episode_steps, std::uint64_t seed);

struct EvalProtocol {
  std::vector<double> velocities{-1.0, -0.8, -0.5, -0.2, 0.0, 0.2, 0.5, 0.8, 1.0};
  std::size_t n_envs = 256;
  int episode_steps = 500;
  std::uint64_t seed = 0;
  /// Replaces the environment's disturbance schedule when set.
  std::optional<DisturbanceSchedule> disturbance;
  bool record_cv = true;
};

struct MetricsRecord {
  std::string run_id;
  std::string risk_mode;
  std::uint64_t seed = 0;
  std::optional<double> target_velocity;  ///< empty for the aggregate row
  bool ood = false;
  double success_rate = 0.0;
  double x_rmse = 0.0;
  double mean_return = 0.0;
  double mean_cv = 0.0;
  double success_drop = 0.0;  ///< NaN where it does not apply
};

/// Velocities outside the training command range count as out of distribution.
bool is_ood(const BalancerConfig& config, double velocity);

/// One row per protocol velocity followed by an aggregate row holding the
/// mean of every metric over those rows.
std::vector<MetricsRecord> evaluate(const Controller& controller, const Mlp* critic, const BalancerConfig& config,
                                    const EvalProtocol& protocol);

struct DisturbProtocol {
  DisturbanceSchedule schedule;  ///< `enabled = false` gives a push-free trace
  double velocity = 0.0;
  std::size_t n_envs = 64;
  int episode_steps = 1000;
  std::uint64_t seed = 0;
};

struct DisturbResult {
  EpisodeSummary with_force;
  EpisodeSummary without_force;
  /// 1 - success_with / success_without; NaN when the baseline never succeeds.
  double success_drop = 0.0;
};

DisturbResult evaluate_disturbance(const Controller& controller, const Mlp& critic, const BalancerConfig& config,
                                   const DisturbProtocol& protocol);

/// Start times (seconds) of the pushes flagged in a trace.
std::vector<double> push_onsets(const CvTrace& trace);

struct PushResponse {
  double onset = 0.0;
  double pre_cv = 0.0;   ///< mean CV over [onset - pre, onset)
  double post_cv = 0.0;  ///< mean CV over [onset, onset + post)
  double pre_deviation = 0.0;
  double post_deviation = 0.0;
};

/// One entry per push whose windows both lie inside the trace.
std::vector<PushResponse> push_responses(const CvTrace& trace, double pre = 1.0, double post = 0.5);

}  // namespace riskadapt
