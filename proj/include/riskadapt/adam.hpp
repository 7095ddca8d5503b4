#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace riskadapt {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// Bias-corrected Adam update in place. Throws NumericalAbort on a non-finite
/// gradient or if any parameter leaves the finite range.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Scales `grads` so its L2 norm is at most `max_norm`; returns the norm before scaling.
double clip_grad_norm(std::span<double> grads, double max_norm);

}  // namespace riskadapt
