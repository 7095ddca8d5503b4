#include "riskadapt/evaluate.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "riskadapt/errors.hpp"
#include "riskadapt/risk_core.hpp"
#include "riskadapt/rng.hpp"

namespace riskadapt {

Controller mean_action_controller(const GaussianPolicy& policy) {
  return [&policy](const Matrix& obs) { return policy.mean_net.forward(obs); };
}

EpisodeSummary run_episodes(const Controller& controller, const Mlp* critic, const BalancerConfig& config,
                            double velocity, std::size_t n_envs, int episode_steps, std::uint64_t seed) {
  if (n_envs == 0) throw DomainError("evaluation needs at least one environment");
  if (episode_steps <= 0) throw DomainError("episode_steps must be positive");
  auto cfg = std::make_shared<BalancerConfig>(config);
  cfg->horizon = episode_steps;
  cfg->validate();

  std::vector<BalancerEnv> envs;
  envs.reserve(n_envs);
  for (std::size_t e = 0; e < n_envs; ++e) {
    envs.emplace_back(cfg, derive_seed(seed, e));
    envs.back().set_command_override(velocity);
    envs.back().set_auto_reset(false);
    envs.back().reset();
  }

  std::vector<std::uint8_t> running(n_envs, 1);
  std::vector<std::uint8_t> crashed(n_envs, 0);
  std::vector<double> returns(n_envs, 0.0);
  double sq_sum = 0.0;
  std::size_t sq_count = 0;
  double cv_sum = 0.0;
  std::size_t cv_count = 0;
  EpisodeSummary out;

  std::vector<std::size_t> live;
  for (int t = 0; t < episode_steps; ++t) {
    live.clear();
    for (std::size_t e = 0; e < n_envs; ++e)
      if (running[e]) live.push_back(e);
    if (live.empty()) break;

    Matrix obs(kBalancerActorObsDim, live.size());
    for (std::size_t j = 0; j < live.size(); ++j) {
      const auto o = actor_observation(envs[live[j]].state(), envs[live[j]].command());
      obs.set_column(j, o);
    }
    const Matrix actions = controller(obs);
    if (actions.rows != 1 || actions.cols != live.size()) throw DimensionError("controller returned the wrong shape");

    if (critic) {
      Matrix priv(kBalancerPrivilegedObsDim, live.size());
      double dev = 0.0;
      for (std::size_t j = 0; j < live.size(); ++j) {
        const auto& env = envs[live[j]];
        priv.set_column(j, privileged_observation(env.state(), env.command()));
        dev += std::abs(env.state().v - env.command().vx_c);
      }
      const Matrix atoms = critic->forward(priv);
      double cv_step = 0.0;
      for (std::size_t j = 0; j < live.size(); ++j) cv_step += coefficient_of_variation(atoms.column(j));
      cv_sum += cv_step;
      cv_count += live.size();
      const auto n = static_cast<double>(live.size());
      out.trace.push_back({t * cfg->dt, cv_step / n, dev / n, envs[live[0]].state().active_push != 0.0});
    }

    for (std::size_t j = 0; j < live.size(); ++j) {
      const std::size_t e = live[j];
      const auto tr = envs[e].step(actions(0, j));
      returns[e] += tr.step.reward.total;
      const double err = tr.step.state.v - envs[e].command().vx_c;
      sq_sum += err * err;
      ++sq_count;
      if (tr.step.done) {
        running[e] = 0;
        crashed[e] = tr.step.crashed ? 1 : 0;
      }
    }
  }

  std::size_t ok = 0;
  double ret = 0.0;
  for (std::size_t e = 0; e < n_envs; ++e) {
    ok += crashed[e] ? 0 : 1;
    ret += returns[e];
  }
  out.success_rate = static_cast<double>(ok) / static_cast<double>(n_envs);
  out.mean_return = ret / static_cast<double>(n_envs);
  out.x_rmse = sq_count ? std::sqrt(sq_sum / static_cast<double>(sq_count)) : 0.0;
  out.mean_cv = cv_count ? cv_sum / static_cast<double>(cv_count) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

bool is_ood(const BalancerConfig& config, double velocity) {
  constexpr double tol = 1e-12;
  return velocity < config.command_min - tol || velocity > config.command_max + tol;
}

std::vector<MetricsRecord> evaluate(const Controller& controller, const Mlp* critic, const BalancerConfig& config,
                                    const EvalProtocol& protocol) {
  if (protocol.velocities.empty()) throw DomainError("evaluation needs at least one velocity");
  BalancerConfig cfg = config;
  if (protocol.disturbance) cfg.disturbance = *protocol.disturbance;
  const Mlp* cv_critic = protocol.record_cv ? critic : nullptr;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<MetricsRecord> rows;
  MetricsRecord agg;
  agg.success_drop = nan;
  for (std::size_t k = 0; k < protocol.velocities.size(); ++k) {
    const double v = protocol.velocities[k];
    // Same reset states for every velocity.
    const auto s = run_episodes(controller, cv_critic, cfg, v, protocol.n_envs, protocol.episode_steps,
                                derive_seed(protocol.seed, kStreamEval));
    MetricsRecord r;
    r.target_velocity = v;
    r.ood = is_ood(cfg, v);
    r.success_rate = s.success_rate;
    r.x_rmse = s.x_rmse;
    r.mean_return = s.mean_return;
    r.mean_cv = s.mean_cv;
    r.success_drop = nan;
    agg.success_rate += r.success_rate;
    agg.x_rmse += r.x_rmse;
    agg.mean_return += r.mean_return;
    agg.mean_cv += r.mean_cv;
    rows.push_back(r);
  }
  const auto n = static_cast<double>(rows.size());
  agg.success_rate /= n;
  agg.x_rmse /= n;
  agg.mean_return /= n;
  agg.mean_cv /= n;
  rows.push_back(agg);
  return rows;
}

DisturbResult evaluate_disturbance(const Controller& controller, const Mlp& critic, const BalancerConfig& config,
                                   const DisturbProtocol& protocol) {
  BalancerConfig pushed = config;
  pushed.disturbance = protocol.schedule;
  BalancerConfig quiet = config;
  quiet.disturbance.enabled = false;
  const auto seed = derive_seed(protocol.seed, kStreamEval);

  DisturbResult out;
  out.with_force = run_episodes(controller, &critic, pushed, protocol.velocity, protocol.n_envs,
                                protocol.episode_steps, seed);
  out.without_force = run_episodes(controller, &critic, quiet, protocol.velocity, protocol.n_envs,
                                   protocol.episode_steps, seed);
  out.success_drop = out.without_force.success_rate > 0.0
                         ? 1.0 - out.with_force.success_rate / out.without_force.success_rate
                         : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<double> push_onsets(const CvTrace& trace) {
  std::vector<double> onsets;
  bool prev = false;
  for (const auto& s : trace) {
    if (s.push_active && !prev) onsets.push_back(s.time);
    prev = s.push_active;
  }
  return onsets;
}

std::vector<PushResponse> push_responses(const CvTrace& trace, double pre, double post) {
  std::vector<PushResponse> out;
  if (trace.empty()) return out;
  const double eps = 1e-9;
  const double end = trace.back().time;
  for (double onset : push_onsets(trace)) {
    if (onset - pre < trace.front().time - eps || onset + post > end + eps) continue;
    PushResponse r;
    r.onset = onset;
    std::size_t n_pre = 0, n_post = 0;
    for (const auto& s : trace) {
      if (s.time >= onset - pre - eps && s.time < onset - eps) {
        r.pre_cv += s.mean_cv;
        r.pre_deviation += s.velocity_deviation;
        ++n_pre;
      } else if (s.time >= onset - eps && s.time < onset + post - eps) {
        r.post_cv += s.mean_cv;
        r.post_deviation += s.velocity_deviation;
        ++n_post;
      }
    }
    if (n_pre == 0 || n_post == 0) continue;
    r.pre_cv /= static_cast<double>(n_pre);
    r.pre_deviation /= static_cast<double>(n_pre);
    r.post_cv /= static_cast<double>(n_post);
    r.post_deviation /= static_cast<double>(n_post);
    out.push_back(r);
  }
  return out;
}

}  // namespace riskadapt
