#include "riskadapt/balancer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <thread>

#include "riskadapt/errors.hpp"
#include "riskadapt/rng.hpp"

namespace riskadapt {

void BalancerConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(dt > 0.0, "dt", "must be positive");
  require(physics_substeps >= 1, "physics_substeps", "must be >= 1");
  require(pole_length > 0.0, "pole_length", "must be positive");
  require(body_mass > 0.0, "body_mass", "must be positive");
  require(wheel_mass > 0.0, "wheel_mass", "must be positive");
  require(wheel_radius > 0.0, "wheel_radius", "must be positive");
  require(gravity >= 0.0, "gravity", "must be non-negative");
  require(friction_min >= 0.0 && friction_min <= friction_max, "friction_min", "need 0 <= friction_min <= friction_max");
  require(mass_scale_min > 0.0 && mass_scale_min <= mass_scale_max, "mass_scale_min",
          "need 0 < mass_scale_min <= mass_scale_max");
  require(torque_limit > 0.0, "torque_limit", "must be positive");
  require(crash_pitch > 0.0 && crash_pitch < std::numbers::pi / 2, "crash_pitch", "must lie in (0, pi/2)");
  require(horizon >= 1, "horizon", "must be >= 1");
  require(init_perturbation >= 0.0, "init_perturbation", "must be non-negative");
  require(command_min <= command_max, "command_min", "must not exceed command_max");
  require(reward.sigma > 0.0, "reward.sigma", "must be positive");
  require(reward.sigma_yaw > 0.0, "reward.sigma_yaw", "must be positive");
  require(reward.upright_pitch > 0.0, "reward.upright_pitch", "must be positive");
  require(reward.smoothness_weight >= 0.0, "reward.smoothness_weight", "must be non-negative");
  require(reward.energy_weight >= 0.0, "reward.energy_weight", "must be non-negative");
  require(reward.exp_coeff >= 0.0, "reward.exp_coeff", "must be non-negative");
  require(disturbance.interval > 0.0, "disturbance.interval", "must be positive");
  require(disturbance.duration > 0.0 && disturbance.duration < disturbance.interval, "disturbance.duration",
          "must be positive and shorter than the interval");
  for (double m : disturbance.magnitudes) {
    require(m >= 0.0 && std::isfinite(m), "disturbance.magnitudes", "must be finite and non-negative");
  }
}

std::array<double, kBalancerActorObsDim> actor_observation(const BalancerState& s, const Command& c) {
  return {s.p, s.p_dot, s.v, c.vx_c, s.last_action};
}

std::array<double, kBalancerPrivilegedObsDim> privileged_observation(const BalancerState& s, const Command& c) {
  return {s.p, s.p_dot, s.v, c.vx_c, s.last_action, s.friction_coeff, s.mass_scale, s.active_push};
}

namespace {

template <std::size_t N>
std::vector<double> to_vector(const std::array<double, N>& a) {
  return {a.begin(), a.end()};
}

std::int64_t steps_of(double seconds, double dt) { return std::llround(seconds / dt); }

}  // namespace

double scheduled_push(const DisturbanceSchedule& schedule, double dt, std::int64_t t_step) {
  if (!schedule.enabled || schedule.magnitudes.empty()) return 0.0;
  const std::int64_t interval = std::max<std::int64_t>(1, steps_of(schedule.interval, dt));
  const std::int64_t duration = steps_of(schedule.duration, dt);
  if (t_step < interval || t_step % interval >= duration) return 0.0;
  const std::int64_t k = t_step / interval - 1;
  const double magnitude = schedule.magnitudes[static_cast<std::size_t>(k) % schedule.magnitudes.size()];
  return k % 2 == 0 ? magnitude : -magnitude;
}

BalancerState apply_push(BalancerState state, const DisturbanceSchedule& schedule, double dt, std::int64_t t_step) {
  state.active_push = scheduled_push(schedule, dt, t_step);
  return state;
}

double mechanical_energy(const BalancerConfig& config, const BalancerState& s) {
  const double m = config.body_mass * s.mass_scale;
  const double l = config.pole_length;
  const double total = config.wheel_mass + m;
  return 0.5 * total * s.v * s.v + m * l * s.v * s.p_dot * std::cos(s.p) +
         0.5 * m * l * l * s.p_dot * s.p_dot + m * config.gravity * l * std::cos(s.p);
}

double support_polygon_angle(const BalancerConfig& config, const BalancerState& s) {
  const double l = config.pole_length;
  const double com_x = s.x + l * std::sin(s.p);
  const double com_z = l * std::cos(s.p);
  const double support_x = s.x;
  const double support_z = 0.0;
  return std::atan((com_x - support_x) / (com_z - support_z));
}

RewardBreakdown compute_reward(const BalancerConfig& config, const BalancerState& s, const Command& c,
                               double action, double last_action) {
  const RewardConfig& rc = config.reward;
  RewardBreakdown r;
  const double pitch_err = c.p_c - s.p;
  r.base_pitch = rc.literal_base_pitch ? -std::cos(pitch_err) : std::cos(pitch_err);

  const bool upright = std::abs(s.p - c.p_c) < rc.upright_pitch;
  const double v_z = -config.pole_length * std::sin(s.p) * s.p_dot;
  if (upright) {
    r.upright_balance = std::exp(-v_z * v_z / rc.sigma) + std::exp(-s.p_dot * s.p_dot / rc.sigma_yaw);
    const double dv = s.v - c.vx_c;
    r.linear_tracking = std::exp(-dv * dv / rc.sigma);
  }

  const double angle = support_polygon_angle(config, s);
  if (angle * c.vx_c < 0.0) {
    const double slack = std::numbers::pi / 2 - std::abs(angle);
    r.support_polygon = -c.vx_c * c.vx_c * slack * slack;
  }

  const double da = action - last_action;
  r.action_smoothness = -rc.smoothness_weight * da * da;
  r.energy = -rc.energy_weight * action * action;

  for (double term : {r.base_pitch, r.upright_balance, r.linear_tracking, r.support_polygon, r.action_smoothness,
                      r.energy}) {
    if (term > 0.0) {
      r.r_plus += term;
    } else {
      r.r_minus += term;
    }
  }
  r.total = r.r_plus * std::exp(rc.exp_coeff * r.r_minus);
  return r;
}

BalancerReset reset(const BalancerConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> command(config.command_min, config.command_max);
  std::uniform_real_distribution<double> friction(config.friction_min, config.friction_max);
  std::uniform_real_distribution<double> mass(config.mass_scale_min, config.mass_scale_max);

  BalancerReset out;
  BalancerState& s = out.state;
  s.p = config.init_perturbation * unit(rng);
  s.p_dot = config.init_perturbation * unit(rng);
  s.v = config.init_perturbation * unit(rng);
  out.command.vx_c = command(rng);
  s.friction_coeff = friction(rng);
  s.mass_scale = mass(rng);
  s = apply_push(s, config.disturbance, config.dt, 0);
  out.actor_obs = to_vector(actor_observation(s, out.command));
  out.privileged_obs = to_vector(privileged_observation(s, out.command));
  return out;
}

BalancerStep step(const BalancerConfig& config, const BalancerState& state, const Command& command, double action) {
  if (!std::isfinite(action)) {
    throw NumericalAbort("balancer step: non-finite action at t_step " + std::to_string(state.t_step));
  }
  const double torque = std::clamp(action, -config.torque_limit, config.torque_limit);

  BalancerStep out;
  BalancerState& s = out.state;
  s = state;
  const double m = config.body_mass * state.mass_scale;
  const double l = config.pole_length;
  const double total = config.wheel_mass + m;
  const double drive = torque / config.wheel_radius;
  const double push = state.active_push;
  const double h = config.dt / config.physics_substeps;
  for (int k = 0; k < config.physics_substeps; ++k) {
    const double sp = std::sin(s.p);
    const double cp = std::cos(s.p);
    // Viscous rolling friction, proportional to the total mass.
    const double force_x = drive + push - state.friction_coeff * total * s.v + m * l * s.p_dot * s.p_dot * sp;
    const double torque_p = m * config.gravity * l * sp + push * l * cp;
    const double coupling = m * l * cp;
    const double det = total * m * l * l - coupling * coupling;
    const double x_acc = (force_x * m * l * l - coupling * torque_p) / det;
    const double p_acc = (total * torque_p - coupling * force_x) / det;
    s.v += h * x_acc;
    s.p_dot += h * p_acc;
    s.x += h * s.v;
    s.p += h * s.p_dot;
  }
  s.t_step = state.t_step + 1;
  s.last_action = torque;
  s = apply_push(s, config.disturbance, config.dt, s.t_step);

  for (double v : {s.x, s.v, s.p, s.p_dot}) {
    if (!std::isfinite(v)) throw NumericalAbort("balancer step: state became non-finite at t_step " +
                                                std::to_string(state.t_step));
  }

  out.reward = compute_reward(config, s, command, torque, state.last_action);
  out.crashed = std::abs(s.p) > config.crash_pitch;
  out.timeout = !out.crashed && s.t_step >= config.horizon;
  out.done = out.crashed || out.timeout;
  out.actor_obs = to_vector(actor_observation(s, command));
  out.privileged_obs = to_vector(privileged_observation(s, command));
  return out;
}

BalancerEnv::BalancerEnv(std::shared_ptr<const BalancerConfig> config, std::uint64_t stream_seed)
    : config_(std::move(config)), stream_seed_(stream_seed) {
  reset();
}

void BalancerEnv::reset() {
  auto r = riskadapt::reset(*config_, derive_seed(stream_seed_, episode_++));
  state_ = r.state;
  command_ = r.command;
  if (command_override_) command_.vx_c = *command_override_;
}

BalancerEnv::Transition BalancerEnv::step(double action) {
  Transition t;
  t.step = riskadapt::step(*config_, state_, command_, action);
  state_ = t.step.state;
  if (t.step.done && auto_reset_) {
    reset();
    t.auto_reset = true;
  }
  return t;
}

std::vector<BalancerEnv::Transition> step_all(std::span<BalancerEnv> envs, std::span<const double> actions,
                                               std::size_t workers) {
  if (envs.size() != actions.size()) throw DimensionError("step_all: env and action counts differ");
  std::vector<BalancerEnv::Transition> out(envs.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) out[e] = envs[e].step(actions[e]);
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, envs.size()));
  if (workers == 1) {
    run(0, envs.size());
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (envs.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(envs.size(), begin + chunk);
    threads.emplace_back([&, w, begin, end] {
      try {
        run(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

BalancerVecEnv::BalancerVecEnv(const BalancerConfig& config, std::size_t num_envs, std::uint64_t master_seed,
                               std::size_t workers)
    : workers_(workers),
      actor_obs_(kBalancerActorObsDim, num_envs),
      privileged_obs_(kBalancerPrivilegedObsDim, num_envs) {
  config.validate();
  auto shared = std::make_shared<const BalancerConfig>(config);
  envs_.reserve(num_envs);
  for (std::size_t e = 0; e < num_envs; ++e) envs_.emplace_back(shared, derive_seed(master_seed, e));
  refresh_observations();
}

void BalancerVecEnv::reset() {
  for (auto& env : envs_) env.reset();
  refresh_observations();
}

void BalancerVecEnv::refresh_observations() {
  for (std::size_t e = 0; e < envs_.size(); ++e) {
    actor_obs_.set_column(e, actor_observation(envs_[e].state(), envs_[e].command()));
    privileged_obs_.set_column(e, privileged_observation(envs_[e].state(), envs_[e].command()));
  }
}

VecStep BalancerVecEnv::step(const Matrix& actions) {
  if (actions.rows != 1 || actions.cols != envs_.size()) throw DimensionError("BalancerVecEnv::step: action shape");
  const auto transitions = step_all(envs_, actions.data, workers_);
  VecStep out;
  const std::size_t n = envs_.size();
  out.rewards.resize(n);
  out.tracking.resize(n);
  out.dones.resize(n);
  out.timeouts.resize(n);
  out.terminal_privileged_obs = Matrix(kBalancerPrivilegedObsDim, n);
  for (std::size_t e = 0; e < n; ++e) {
    const auto& st = transitions[e].step;
    out.rewards[e] = st.reward.total;
    out.tracking[e] = st.reward.linear_tracking;
    out.dones[e] = st.done;
    out.timeouts[e] = st.timeout;
    if (st.timeout) out.terminal_privileged_obs.set_column(e, st.privileged_obs);
  }
  refresh_observations();
  return out;
}

}  // namespace riskadapt
