#pragma once

// Two-arm choice with a known risk trade-off: the safe arm pays 1.0, the risky
// arm pays 0.0 or 2.5 with equal probability (mean 1.25). Under Wang(alpha) the
// risky arm is worth 2.5 * (1 - Phi(alpha)), so averse agents should prefer the
// safe arm once alpha > Phi^-1(0.6) ~ 0.253.

#include <cstdint>
#include <random>
#include <vector>

#include "riskadapt/policy.hpp"
#include "riskadapt/vec_env.hpp"

namespace riskadapt {

inline constexpr double kSafeReward = 1.0;
inline constexpr double kRiskyLow = 0.0;
inline constexpr double kRiskyHigh = 2.5;

struct RiskyOutcome {
  double reward = 0.0;
  bool done = true;
};

/// Pulls `arm` (0 safe, 1 risky); the episode always ends. Throws DomainError
/// for any other arm index.
RiskyOutcome risky_choice_env(int arm, std::mt19937_64& rng);

/// Maps a continuous policy action onto an arm: positive means risky.
inline int arm_from_action(double action) { return action > 0.0 ? 1 : 0; }

/// Training wrapper. Each episode is a decision step (the arm is chosen, no
/// reward, and the chosen arm becomes observable) followed by a resolution step
/// that pays out through risky_choice_env. Separating the two lets the
/// distorted value of the post-decision state price the arm's risk.
///
/// Observations are one-hot: [deciding, safe pending, risky pending], the same
/// for actor and critic.
class RiskyChoiceVecEnv final : public VecEnv {
 public:
  RiskyChoiceVecEnv(std::size_t num_envs, std::uint64_t master_seed);

  std::size_t num_envs() const override { return phase_.size(); }
  std::size_t actor_obs_dim() const override { return 3; }
  std::size_t privileged_obs_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }

  void reset() override;
  const Matrix& actor_obs() const override { return obs_; }
  const Matrix& privileged_obs() const override { return obs_; }
  VecStep step(const Matrix& actions) override;

  /// Observation of the decision state.
  static std::vector<double> decision_observation() { return {1.0, 0.0, 0.0}; }

 private:
  void refresh_observations();

  std::vector<std::mt19937_64> rngs_;
  std::vector<int> phase_;  ///< -1 deciding, otherwise the pending arm
  Matrix obs_;
};

/// Probability that `policy` picks the risky arm in the decision state.
double risky_arm_probability(const GaussianPolicy& policy);

}  // namespace riskadapt
