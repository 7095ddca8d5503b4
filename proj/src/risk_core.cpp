#include "riskadapt/risk_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "riskadapt/errors.hpp"
#include "riskadapt/normal.hpp"

namespace riskadapt {

QuantileDistribution::QuantileDistribution(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw DomainError("QuantileDistribution needs at least one atom");
  for (double v : values_) {
    if (!std::isfinite(v)) throw DomainError("QuantileDistribution atoms must be finite");
  }
  std::sort(values_.begin(), values_.end());
}

double atom_mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double QuantileDistribution::mean() const noexcept { return atom_mean(values_); }

DistortionMeasure DistortionMeasure::wang(double alpha) {
  if (!std::isfinite(alpha)) throw DomainError("Wang level must be finite");
  return {DistortionKind::Wang, alpha};
}

DistortionMeasure DistortionMeasure::cvar(double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("CVaR level must lie in (0, 1]");
  return {DistortionKind::CVaR, beta};
}

double DistortionMeasure::operator()(double tau) const {
  switch (kind) {
    case DistortionKind::Neutral:
      if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
      return tau;
    case DistortionKind::Wang:
      return wang_distortion(tau, level);
    case DistortionKind::CVaR:
      return cvar_distortion(tau, level);
  }
  return tau;
}

std::string DistortionMeasure::describe() const {
  std::ostringstream os;
  switch (kind) {
    case DistortionKind::Neutral: os << "neutral"; break;
    case DistortionKind::Wang: os << "wang(" << level << ")"; break;
    case DistortionKind::CVaR: os << "cvar(" << level << ")"; break;
  }
  return os.str();
}

double wang_distortion(double tau, double alpha) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("wang_distortion: tau must lie in [0, 1]");
  if (!std::isfinite(alpha)) throw DomainError("wang_distortion: alpha must be finite");
  if (tau == 0.0) return 0.0;
  if (tau == 1.0) return 1.0;
  if (alpha == 0.0) return tau;
  return normal_cdf(normal_quantile(tau) + alpha);
}

double cvar_distortion(double tau, double beta) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("cvar_distortion: tau must lie in [0, 1]");
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("cvar_distortion: beta must lie in (0, 1]");
  return std::min(tau / beta, 1.0);
}

std::vector<double> distortion_weights(std::size_t n, const DistortionMeasure& measure) {
  if (n == 0) throw DomainError("distortion_weights: n must be positive");
  std::vector<double> weights(n);
  if (measure.kind == DistortionKind::Neutral) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(n));
    return weights;
  }
  double prev = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double tau = i == n ? 1.0 : static_cast<double>(i) / static_cast<double>(n);
    const double g = measure(tau);
    weights[i - 1] = g - prev;
    prev = g;
  }
  return weights;
}

DistortedValue::DistortedValue(std::size_t n, const DistortionMeasure& measure)
    : measure_(measure), weights_(distortion_weights(n, measure)) {}

double DistortedValue::operator()(std::span<const double> sorted) const {
  if (sorted.size() != weights_.size()) throw DimensionError("distorted_value: atom count mismatch");
  if (measure_.kind == DistortionKind::Neutral) return atom_mean(sorted);
  double value = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) value += weights_[i] * sorted[i];
  return value;
}

double distorted_value(const QuantileDistribution& dist, const DistortionMeasure& measure) {
  return DistortedValue(dist.size(), measure)(dist.values());
}

double midpoint_level(std::size_t i, std::size_t n) {
  return (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
}

QuantileLossResult quantile_loss(const QuantileDistribution& predicted, double target) {
  return quantile_loss(predicted.values(), target);
}

QuantileLossResult quantile_loss(std::span<const double> atoms, double target) {
  const std::size_t n = atoms.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  QuantileLossResult result;
  result.grad.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = midpoint_level(i, n);
    const double u = target - atoms[i];
    const double below = u < 0.0 ? 1.0 : 0.0;
    result.loss += (tau - below) * u;
    // 0 lies in the subdifferential at the kink; atoms on the target stay put.
    result.grad[i] = u == 0.0 ? 0.0 : (below - tau) * inv_n;
  }
  result.loss *= inv_n;
  return result;
}

double coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) throw DomainError("coefficient_of_variation: empty distribution");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / n);
  return sigma / std::max(mean, kCvMeanFloor);
}

double coefficient_of_variation(const QuantileDistribution& dist) {
  return coefficient_of_variation(dist.values());
}

double adaptive_alpha(std::int64_t t, const RiskSchedule& schedule, double cv) {
  if (schedule.total_steps < 1) throw DomainError("RiskSchedule.total_steps must be >= 1");
  if (t == 0) return schedule.alpha_0;
  const double progress = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  const double decay = std::exp(-progress / std::max(cv, kCvMeanFloor));
  return (schedule.alpha_0 - schedule.alpha_T) * decay + schedule.alpha_T;
}

}  // namespace riskadapt
