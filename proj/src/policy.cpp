#include "riskadapt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "riskadapt/errors.hpp"

namespace riskadapt {

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

void GaussianPolicy::clamp_log_std() {
  for (double& s : log_std) s = std::clamp(s, kLogStdMin, kLogStdMax);
}

double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> action) {
  if (mean.size() != log_std.size() || action.size() != log_std.size()) {
    throw DimensionError("gaussian_log_prob: dimension mismatch");
  }
  double lp = 0.0;
  for (std::size_t j = 0; j < action.size(); ++j) {
    const double z = (action[j] - mean[j]) / std::exp(log_std[j]);
    lp += -0.5 * z * z - log_std[j] - 0.5 * kLog2Pi;
  }
  return lp;
}

double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double s : log_std) h += s + 0.5 * (1.0 + kLog2Pi);
  return h;
}

ActionSample sample_action(const GaussianPolicy& policy, std::span<const double> obs,
                           std::span<const double> noise) {
  if (noise.size() != policy.action_dim()) throw DimensionError("sample_action: noise dimension mismatch");
  const auto mean = policy.mean_net.forward(obs);
  ActionSample sample;
  sample.action.resize(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    sample.action[j] = mean[j] + std::exp(policy.log_std[j]) * noise[j];
  }
  sample.log_prob = gaussian_log_prob(mean, policy.log_std, sample.action);
  return sample;
}

LogProbEntropy log_prob_and_entropy(const GaussianPolicy& policy, std::span<const double> obs,
                                    std::span<const double> action) {
  const auto mean = policy.mean_net.forward(obs);
  return {gaussian_log_prob(mean, policy.log_std, action), gaussian_entropy(policy.log_std)};
}

QuantileDistribution critic_forward(const Mlp& critic, std::span<const double> privileged_obs) {
  return QuantileDistribution(critic.forward(privileged_obs));
}

}  // namespace riskadapt
