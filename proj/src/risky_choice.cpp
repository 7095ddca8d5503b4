#include "riskadapt/risky_choice.hpp"

#include <cmath>
#include <string>

#include "riskadapt/errors.hpp"
#include "riskadapt/normal.hpp"
#include "riskadapt/rng.hpp"

namespace riskadapt {

RiskyOutcome risky_choice_env(int arm, std::mt19937_64& rng) {
  switch (arm) {
    case 0:
      return {kSafeReward, true};
    case 1: {
      std::bernoulli_distribution coin(0.5);
      return {coin(rng) ? kRiskyHigh : kRiskyLow, true};
    }
    default:
      throw DomainError("risky_choice_env: invalid arm index " + std::to_string(arm));
  }
}

RiskyChoiceVecEnv::RiskyChoiceVecEnv(std::size_t num_envs, std::uint64_t master_seed)
    : phase_(num_envs, -1), obs_(3, num_envs) {
  rngs_.reserve(num_envs);
  for (std::size_t e = 0; e < num_envs; ++e) rngs_.emplace_back(derive_seed(master_seed, e));
  refresh_observations();
}

void RiskyChoiceVecEnv::reset() {
  std::fill(phase_.begin(), phase_.end(), -1);
  refresh_observations();
}

void RiskyChoiceVecEnv::refresh_observations() {
  std::fill(obs_.data.begin(), obs_.data.end(), 0.0);
  for (std::size_t e = 0; e < phase_.size(); ++e) obs_(static_cast<std::size_t>(phase_[e] + 1), e) = 1.0;
}

VecStep RiskyChoiceVecEnv::step(const Matrix& actions) {
  if (actions.rows != 1 || actions.cols != phase_.size()) throw DimensionError("RiskyChoiceVecEnv::step: action shape");
  const std::size_t n = phase_.size();
  VecStep out;
  out.rewards.assign(n, 0.0);
  out.tracking.assign(n, 0.0);
  out.dones.assign(n, 0);
  out.timeouts.assign(n, 0);
  out.terminal_privileged_obs = Matrix(3, n);
  for (std::size_t e = 0; e < n; ++e) {
    if (!std::isfinite(actions(0, e))) throw NumericalAbort("RiskyChoiceVecEnv::step: non-finite action");
    if (phase_[e] < 0) {
      phase_[e] = arm_from_action(actions(0, e));
    } else {
      out.rewards[e] = risky_choice_env(phase_[e], rngs_[e]).reward;
      out.dones[e] = 1;
      phase_[e] = -1;
    }
  }
  refresh_observations();
  return out;
}

double risky_arm_probability(const GaussianPolicy& policy) {
  const auto mean = policy.mean_net.forward(RiskyChoiceVecEnv::decision_observation());
  // P(mean + sigma * eps > 0)
  return normal_cdf(mean[0] / std::exp(policy.log_std[0]));
}

}  // namespace riskadapt
