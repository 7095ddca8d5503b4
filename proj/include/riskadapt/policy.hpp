#pragma once

#include <span>
#include <vector>

#include "riskadapt/mlp.hpp"
#include "riskadapt/risk_core.hpp"

namespace riskadapt {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian actor with a state-independent learned log std.
struct GaussianPolicy {
  Mlp mean_net;
  std::vector<double> log_std;

  std::size_t action_dim() const noexcept { return log_std.size(); }
  void clamp_log_std();
};

struct ActionSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

struct LogProbEntropy {
  double log_prob = 0.0;
  double entropy = 0.0;
};

/// Diagonal Gaussian log density of `action`.
double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> action);

double gaussian_entropy(std::span<const double> log_std);

/// action = mean(obs) + exp(log_std) * noise. The caller draws `noise` so that
/// sampling stays reproducible under its own seeding.
ActionSample sample_action(const GaussianPolicy& policy, std::span<const double> obs,
                           std::span<const double> noise);

LogProbEntropy log_prob_and_entropy(const GaussianPolicy& policy, std::span<const double> obs,
                                    std::span<const double> action);

/// Runs the critic on one privileged observation and wraps the outputs as a
/// (sorted) quantile distribution.
QuantileDistribution critic_forward(const Mlp& critic, std::span<const double> privileged_obs);

}  // namespace riskadapt
