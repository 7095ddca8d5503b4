#pragma once

// Distribution-level risk math: quantile distributions, distortion risk
// measures, the quantile-regression loss, the coefficient of variation and the
// uncertainty-driven risk schedule. Everything here is a pure function.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace riskadapt {

/// N return quantiles, kept sorted ascending.
///
/// Raw critic outputs carry no ordering, so construction sorts them; every
/// consumer can rely on values()[i] being the i-th smallest atom.
class QuantileDistribution {
 public:
  /// Throws DomainError for an empty or non-finite input.
  explicit QuantileDistribution(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double mean() const noexcept;

 private:
  std::vector<double> values_;
};

enum class DistortionKind { Neutral, Wang, CVaR };

/// Risk preference applied to a QuantileDistribution.
///
/// Wang level is alpha (positive is averse, negative is seeking); CVaR level
/// is the tail fraction beta in (0, 1]. Level is ignored for Neutral.
struct DistortionMeasure {
  DistortionKind kind = DistortionKind::Neutral;
  double level = 0.0;

  static DistortionMeasure neutral() { return {}; }
  static DistortionMeasure wang(double alpha);
  static DistortionMeasure cvar(double beta);

  /// The distortion function g(tau).
  double operator()(double tau) const;
  std::string describe() const;
};

/// g(tau) = Phi(Phi^-1(tau) + alpha), with the limits 0 and 1 at the endpoints.
double wang_distortion(double tau, double alpha);

/// g(tau) = min(tau / beta, 1).
double cvar_distortion(double tau, double beta);

/// Weights g(i/N) - g((i-1)/N) for i = 1..N.
std::vector<double> distortion_weights(std::size_t n, const DistortionMeasure& measure);

/// Distorted expectation sum_i (g(tau_i) - g(tau_{i-1})) theta_i over the
/// sorted atoms. Neutral reduces to the arithmetic mean.
double distorted_value(const QuantileDistribution& dist, const DistortionMeasure& measure);

/// Distorted-value evaluator with the weights for one (N, measure) pair
/// computed once. distorted_value() goes through this class, so batched and
/// one-off evaluations agree bitwise.
class DistortedValue {
 public:
  DistortedValue(std::size_t n, const DistortionMeasure& measure);

  /// `sorted` must hold N ascending atoms.
  double operator()(std::span<const double> sorted) const;

  const DistortionMeasure& measure() const noexcept { return measure_; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  DistortionMeasure measure_;
  std::vector<double> weights_;
};

/// Quantile level paired with atom i (0-based) inside the regression loss:
/// the midpoint (2i + 1) / (2N).
double midpoint_level(std::size_t i, std::size_t n);

struct QuantileLossResult {
  double loss = 0.0;
  std::vector<double> grad;  ///< d loss / d theta_i, aligned with dist.values()
};

/// (1/N) sum_i (tau_i - 1{z < theta_i}) (z - theta_i) with midpoint levels,
/// plus its exact subgradient.
QuantileLossResult quantile_loss(const QuantileDistribution& predicted, double target);

/// Same loss on an already ascending atom buffer.
QuantileLossResult quantile_loss(std::span<const double> sorted_atoms, double target);

/// Arithmetic mean of the atoms.
double atom_mean(std::span<const double> values);

inline constexpr double kCvMeanFloor = 1e-6;

/// sigma / mu over the atoms (population variance). The mean is floored at
/// kCvMeanFloor, so a non-positive mean yields sigma / 1e-6.
double coefficient_of_variation(const QuantileDistribution& dist);

/// Order-independent variant for raw atom buffers.
double coefficient_of_variation(std::span<const double> values);

struct RiskSchedule {
  double alpha_0 = 0.0;
  double alpha_T = -0.2;
  std::int64_t total_steps = 1000;
};

/// alpha_t = (alpha_0 - alpha_T) exp(-(t/T) / cv) + alpha_T with cv floored
/// at kCvMeanFloor; returns alpha_0 exactly at t = 0.
double adaptive_alpha(std::int64_t t, const RiskSchedule& schedule, double cv);

}  // namespace riskadapt
