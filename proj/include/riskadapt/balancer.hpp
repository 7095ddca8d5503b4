#pragma once

// Planar wheeled inverted pendulum. A point-mass body sits on a massless rod
// of length l above a wheel that rolls along x; the wheel torque becomes a
// ground force torque / wheel_radius. Pitch p is measured from vertical and is
// positive when the body leans toward +x.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "riskadapt/vec_env.hpp"

namespace riskadapt {

/// Horizontal pushes on the body. Push k (k = 0, 1, ...) starts at
/// (k + 1) * interval seconds, lasts `duration`, has magnitude
/// magnitudes[k % size] and alternates sign starting positive.
struct DisturbanceSchedule {
  bool enabled = false;
  double interval = 2.0;
  double duration = 0.5;
  std::vector<double> magnitudes{1.0, 2.0, 3.0, 4.0, 5.0};
};

struct RewardConfig {
  double sigma = 0.25;
  double sigma_yaw = 0.25;
  double upright_pitch = 0.3;  ///< |p - p_c| below this counts as upright
  double smoothness_weight = 0.1;
  double energy_weight = 0.05;
  double exp_coeff = 0.02;  ///< c in r_plus * exp(c * r_minus)
  bool literal_base_pitch = false;  ///< use -cos(p_c - p) instead of +cos
};

struct BalancerConfig {
  double dt = 0.02;
  int physics_substeps = 1;
  double pole_length = 0.5;
  double body_mass = 1.0;
  double wheel_mass = 0.5;
  double wheel_radius = 0.1;
  double gravity = 9.81;
  double friction_min = 0.05;
  double friction_max = 0.2;
  double mass_scale_min = 0.8;
  double mass_scale_max = 1.2;
  double torque_limit = 3.0;
  double crash_pitch = 0.7;
  int horizon = 500;
  double init_perturbation = 0.05;
  double command_min = -0.8;
  double command_max = 0.8;
  RewardConfig reward;
  DisturbanceSchedule disturbance;

  /// Throws ConfigError naming the offending key (relative to the env section).
  void validate() const;
};

struct BalancerState {
  double x = 0.0;
  double v = 0.0;
  double p = 0.0;
  double p_dot = 0.0;
  std::int64_t t_step = 0;
  double friction_coeff = 0.1;
  double mass_scale = 1.0;
  double active_push = 0.0;  ///< force applied during the upcoming step (N)
  double last_action = 0.0;  ///< clipped torque of the previous step
};

struct Command {
  double vx_c = 0.0;
  double p_c = 0.0;
};

struct RewardBreakdown {
  double base_pitch = 0.0;
  double upright_balance = 0.0;
  double linear_tracking = 0.0;
  double support_polygon = 0.0;
  double action_smoothness = 0.0;
  double energy = 0.0;
  double r_plus = 0.0;
  double r_minus = 0.0;
  double total = 0.0;
};

inline constexpr std::size_t kBalancerActorObsDim = 5;
inline constexpr std::size_t kBalancerPrivilegedObsDim = 8;

/// [p, p_dot, v, vx_c, last_action]; no position, friction, mass or push.
std::array<double, kBalancerActorObsDim> actor_observation(const BalancerState& s, const Command& c);
/// Actor observation followed by [friction_coeff, mass_scale, active_push].
std::array<double, kBalancerPrivilegedObsDim> privileged_observation(const BalancerState& s, const Command& c);

struct BalancerReset {
  BalancerState state;
  Command command;
  std::vector<double> actor_obs;
  std::vector<double> privileged_obs;
};

BalancerReset reset(const BalancerConfig& config, std::uint64_t seed);

struct BalancerStep {
  BalancerState state;
  RewardBreakdown reward;
  bool done = false;
  bool crashed = false;
  bool timeout = false;
  std::vector<double> actor_obs;
  std::vector<double> privileged_obs;
};

/// One control step of dt. `action` is the wheel torque, clipped to
/// [-torque_limit, torque_limit]; throws NumericalAbort when not finite.
BalancerStep step(const BalancerConfig& config, const BalancerState& state, const Command& command,
                  double action);

/// Task reward of arriving in `state` after applying `action`.
RewardBreakdown compute_reward(const BalancerConfig& config, const BalancerState& state, const Command& command,
                               double action, double last_action);

/// arctan(dx / dz) of the body CoM relative to the support point, in a
/// gravity-aligned frame; positive when the CoM is ahead of the wheel.
double support_polygon_angle(const BalancerConfig& config, const BalancerState& state);

/// Signed push force scheduled for the step that starts at `t_step`.
double scheduled_push(const DisturbanceSchedule& schedule, double dt, std::int64_t t_step);

BalancerState apply_push(BalancerState state, const DisturbanceSchedule& schedule, double dt, std::int64_t t_step);

/// Kinetic plus potential energy of wheel and body.
double mechanical_energy(const BalancerConfig& config, const BalancerState& state);

/// One environment with its own seed stream; episode k resets from
/// derive_seed(stream_seed, k).
class BalancerEnv {
 public:
  BalancerEnv(std::shared_ptr<const BalancerConfig> config, std::uint64_t stream_seed);

  void reset();

  struct Transition {
    BalancerStep step;   ///< terminal information when step.done
    bool auto_reset = false;
  };
  /// Steps once; a finished episode is immediately replaced by a fresh one.
  Transition step(double action);

  /// Pins the command for every subsequent episode (evaluation).
  void set_command_override(std::optional<double> vx_c) { command_override_ = vx_c; }
  void set_auto_reset(bool enabled) { auto_reset_ = enabled; }

  const BalancerState& state() const noexcept { return state_; }
  const Command& command() const noexcept { return command_; }
  const BalancerConfig& config() const noexcept { return *config_; }

 private:
  std::shared_ptr<const BalancerConfig> config_;
  std::uint64_t stream_seed_;
  std::uint64_t episode_ = 0;
  std::optional<double> command_override_;
  bool auto_reset_ = true;
  BalancerState state_;
  Command command_;
};

/// Steps every env with its action. Envs are partitioned into contiguous
/// chunks over `workers` threads; results do not depend on the worker count.
std::vector<BalancerEnv::Transition> step_all(std::span<BalancerEnv> envs, std::span<const double> actions,
                                               std::size_t workers = 1);

/// VecEnv adapter over BalancerEnv with seeds split from one master seed.
class BalancerVecEnv final : public VecEnv {
 public:
  BalancerVecEnv(const BalancerConfig& config, std::size_t num_envs, std::uint64_t master_seed,
                 std::size_t workers = 1);

  std::size_t num_envs() const override { return envs_.size(); }
  std::size_t actor_obs_dim() const override { return kBalancerActorObsDim; }
  std::size_t privileged_obs_dim() const override { return kBalancerPrivilegedObsDim; }
  std::size_t action_dim() const override { return 1; }

  void reset() override;
  const Matrix& actor_obs() const override { return actor_obs_; }
  const Matrix& privileged_obs() const override { return privileged_obs_; }
  VecStep step(const Matrix& actions) override;

  std::span<BalancerEnv> envs() { return envs_; }

 private:
  void refresh_observations();

  std::vector<BalancerEnv> envs_;
  std::size_t workers_;
  Matrix actor_obs_;
  Matrix privileged_obs_;
};

}  // namespace riskadapt
