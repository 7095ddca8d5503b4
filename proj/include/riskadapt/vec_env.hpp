#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "riskadapt/mlp.hpp"

namespace riskadapt {

/// Result of stepping every environment in a vector once.
struct VecStep {
  std::vector<double> rewards;
  std::vector<double> tracking;       ///< linear-tracking reward term (0 where undefined)
  std::vector<std::uint8_t> dones;     ///< crash or horizon
  std::vector<std::uint8_t> timeouts;  ///< horizon reached without a crash
  /// Privileged observation of the terminal state, valid in columns where timeouts[e] is set.
  Matrix terminal_privileged_obs;
};

/// Batch of independent environments with asymmetric observations and
/// automatic reset. Observation matrices are feature-major (one column per env)
/// and always describe the state the next action will be applied to.
class VecEnv {
 public:
  virtual ~VecEnv() = default;

  virtual std::size_t num_envs() const = 0;
  virtual std::size_t actor_obs_dim() const = 0;
  virtual std::size_t privileged_obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;

  virtual void reset() = 0;
  virtual const Matrix& actor_obs() const = 0;
  virtual const Matrix& privileged_obs() const = 0;
  /// `actions` is action_dim x num_envs.
  virtual VecStep step(const Matrix& actions) = 0;
};

}  // namespace riskadapt
