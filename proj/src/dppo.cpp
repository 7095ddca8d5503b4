#include "riskadapt/dppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "riskadapt/errors.hpp"
#include "riskadapt/rng.hpp"

namespace riskadapt {

std::string to_string(RiskMode mode) {
  switch (mode) {
    case RiskMode::Adaptive: return "adaptive";
    case RiskMode::FixedNeutral: return "fixed_neutral";
    case RiskMode::FixedAverse: return "fixed_averse";
    case RiskMode::FixedSeeking: return "fixed_seeking";
    case RiskMode::ScalarPpo: return "scalar_ppo";
  }
  return "adaptive";
}

RiskMode parse_risk_mode(std::string_view name) {
  if (name == "adaptive") return RiskMode::Adaptive;
  if (name == "fixed_neutral") return RiskMode::FixedNeutral;
  if (name == "fixed_averse") return RiskMode::FixedAverse;
  if (name == "fixed_seeking") return RiskMode::FixedSeeking;
  if (name == "scalar_ppo") return RiskMode::ScalarPpo;
  throw ConfigError("risk_mode", "unknown risk mode '" + std::string(name) + "'");
}

void PpoConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(clip_eps > 0.0, "clip_eps", "must be positive");
  require(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda", "must lie in [0, 1]");
  require(actor_lr >= 0.0, "actor_lr", "must be non-negative");
  require(critic_lr >= 0.0, "critic_lr", "must be non-negative");
  require(update_epochs >= 1, "update_epochs", "must be >= 1");
  require(minibatch_size >= 1, "minibatch_size", "must be >= 1");
  require(entropy_coeff >= 0.0, "entropy_coeff", "must be non-negative");
  require(max_grad_norm >= 0.0, "max_grad_norm", "must be non-negative (0 disables clipping)");
  require(n_quantiles >= 1, "n_quantiles", "must be >= 1");
  require(rollout_length >= 1, "rollout_length", "must be >= 1");
  require(n_envs >= 1, "n_envs", "must be >= 1");
  require(total_iterations >= 1, "total_iterations", "must be >= 1");
  require(std::isfinite(alpha_0), "alpha_0", "must be finite");
  require(std::isfinite(alpha_T), "alpha_T", "must be finite");
  require(reward_scale > 0.0, "reward_scale", "must be positive");
  require(init_log_std >= kLogStdMin && init_log_std <= kLogStdMax, "init_log_std", "must lie in [-5, 2]");
  for (auto h : actor_hidden) require(h >= 1, "actor_hidden", "layer widths must be positive");
  for (auto h : critic_hidden) require(h >= 1, "critic_hidden", "layer widths must be positive");
  if (fixed_alpha) {
    require(std::isfinite(*fixed_alpha), "fixed_alpha", "must be finite");
    switch (risk_mode) {
      case RiskMode::FixedAverse:
        require(*fixed_alpha > 0.0, "fixed_alpha", "fixed_averse needs a positive alpha");
        break;
      case RiskMode::FixedSeeking:
        require(*fixed_alpha < 0.0, "fixed_alpha", "fixed_seeking needs a negative alpha");
        break;
      case RiskMode::FixedNeutral:
        require(*fixed_alpha == 0.0, "fixed_alpha", "fixed_neutral needs alpha = 0");
        break;
      default:
        break;
    }
  }
}

std::size_t PpoConfig::effective_quantiles() const {
  return risk_mode == RiskMode::ScalarPpo ? 1 : n_quantiles;
}

double PpoConfig::mode_alpha() const {
  switch (risk_mode) {
    case RiskMode::FixedAverse: return fixed_alpha.value_or(0.2);
    case RiskMode::FixedSeeking: return fixed_alpha.value_or(-0.2);
    default: return 0.0;
  }
}

TrainState make_train_state(const PpoConfig& config, std::size_t actor_obs_dim, std::size_t privileged_obs_dim,
                            std::size_t action_dim, std::uint64_t seed) {
  config.validate();
  TrainState state;
  std::mt19937_64 init_rng(derive_seed(seed, kStreamInit));

  std::vector<std::size_t> actor_dims{actor_obs_dim};
  actor_dims.insert(actor_dims.end(), config.actor_hidden.begin(), config.actor_hidden.end());
  actor_dims.push_back(action_dim);
  state.policy.mean_net = Mlp::orthogonal(actor_dims, 0.01, init_rng);
  state.policy.log_std.assign(action_dim, config.init_log_std);

  std::vector<std::size_t> critic_dims{privileged_obs_dim};
  critic_dims.insert(critic_dims.end(), config.critic_hidden.begin(), config.critic_hidden.end());
  critic_dims.push_back(config.effective_quantiles());
  state.critic = Mlp::orthogonal(critic_dims, 1.0, init_rng);

  state.actor_opt = AdamState(state.policy.mean_net.num_params(), config.actor_lr);
  state.log_std_opt = AdamState(action_dim, config.actor_lr);
  state.critic_opt = AdamState(state.critic.num_params(), config.critic_lr);

  const std::uint64_t noise_seed = derive_seed(seed, kStreamActionNoise);
  state.noise_rngs.reserve(config.n_envs);
  for (std::size_t e = 0; e < config.n_envs; ++e) state.noise_rngs.emplace_back(derive_seed(noise_seed, e));
  state.shuffle_rng.seed(derive_seed(seed, kStreamShuffle));

  state.alpha = config.risk_mode == RiskMode::Adaptive ? config.alpha_0 : config.mode_alpha();
  return state;
}

DistortionMeasure current_measure(const TrainState& state, const PpoConfig& config) {
  switch (config.risk_mode) {
    case RiskMode::FixedNeutral:
    case RiskMode::ScalarPpo:
      return DistortionMeasure::neutral();
    default:
      return DistortionMeasure::wang(state.alpha);
  }
}

namespace {

void check_finite(const Matrix& m, const char* what, std::int64_t iteration, std::size_t step) {
  for (std::size_t k = 0; k < m.data.size(); ++k) {
    if (!std::isfinite(m.data[k])) {
      std::ostringstream os;
      os << "collect_rollouts: non-finite " << what << " (iteration " << iteration << ", step " << step
         << ", feature " << k / m.cols << ", env " << k % m.cols << ")";
      throw NumericalAbort(os.str());
    }
  }
}

// Sorts each column of `raw` in place and returns the distorted value per column.
std::vector<double> sorted_values(Matrix& raw, const DistortedValue& value) {
  std::vector<double> out(raw.cols);
  std::vector<double> col;
  for (std::size_t c = 0; c < raw.cols; ++c) {
    col = raw.column(c);
    std::sort(col.begin(), col.end());
    raw.set_column(c, col);
    out[c] = value(col);
  }
  return out;
}

void copy_columns(const Matrix& src, Matrix& dst, std::size_t first) {
  for (std::size_t r = 0; r < src.rows; ++r) {
    std::copy(src.data.begin() + static_cast<std::ptrdiff_t>(r * src.cols),
              src.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * src.cols),
              dst.data.begin() + static_cast<std::ptrdiff_t>(r * dst.cols + first));
  }
}

}  // namespace

RolloutBatch collect_rollouts(TrainState& state, VecEnv& envs, const PpoConfig& config) {
  const std::size_t n = envs.num_envs();
  if (n != state.noise_rngs.size()) throw DimensionError("collect_rollouts: env count differs from noise streams");
  const std::size_t len = config.rollout_length;
  const std::size_t total = n * len;
  const std::size_t act_dim = envs.action_dim();
  const std::size_t n_atoms = state.critic.output_dim();

  RolloutBatch batch;
  batch.n_envs = n;
  batch.length = len;
  batch.actor_obs = Matrix(envs.actor_obs_dim(), total);
  batch.privileged_obs = Matrix(envs.privileged_obs_dim(), total);
  batch.actions = Matrix(act_dim, total);
  batch.quantiles = Matrix(n_atoms, total);
  batch.log_probs.resize(total);
  batch.rewards.resize(total);
  batch.env_rewards.resize(total);
  batch.tracking.resize(total);
  batch.values.resize(total);
  batch.dones.resize(total);
  batch.timeouts.resize(total);
  batch.timeout_values.assign(total, 0.0);
  batch.alpha = state.alpha;
  batch.measure = current_measure(state, config);
  const DistortedValue value_of(n_atoms, batch.measure);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> mean_col, act_col;
  for (std::size_t t = 0; t < len; ++t) {
    const Matrix& obs = envs.actor_obs();
    const Matrix& priv = envs.privileged_obs();
    check_finite(obs, "actor observation", state.iteration, t);
    check_finite(priv, "privileged observation", state.iteration, t);

    const Matrix mean = state.policy.mean_net.forward(obs);
    Matrix actions(act_dim, n);
    for (std::size_t e = 0; e < n; ++e) {
      for (std::size_t j = 0; j < act_dim; ++j) {
        const double noise = normal(state.noise_rngs[e]);
        actions(j, e) = mean(j, e) + std::exp(state.policy.log_std[j]) * noise;
      }
      mean_col = mean.column(e);
      act_col = actions.column(e);
      batch.log_probs[t * n + e] = gaussian_log_prob(mean_col, state.policy.log_std, act_col);
    }
    check_finite(actions, "action", state.iteration, t);

    Matrix atoms = state.critic.forward(priv);
    const auto values = sorted_values(atoms, value_of);

    copy_columns(obs, batch.actor_obs, t * n);
    copy_columns(priv, batch.privileged_obs, t * n);
    copy_columns(actions, batch.actions, t * n);
    copy_columns(atoms, batch.quantiles, t * n);
    std::copy(values.begin(), values.end(), batch.values.begin() + static_cast<std::ptrdiff_t>(t * n));

    VecStep step = envs.step(actions);
    std::vector<std::size_t> truncated;
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t k = t * n + e;
      batch.env_rewards[k] = step.rewards[e];
      batch.rewards[k] = step.rewards[e] * config.reward_scale;
      batch.tracking[k] = step.tracking[e];
      batch.dones[k] = step.dones[e];
      batch.timeouts[k] = step.timeouts[e];
      if (step.timeouts[e]) truncated.push_back(e);
    }
    if (!truncated.empty()) {
      Matrix terminal = step.terminal_privileged_obs.gather_columns(truncated);
      Matrix terminal_atoms = state.critic.forward(terminal);
      const auto terminal_values = sorted_values(terminal_atoms, value_of);
      for (std::size_t k = 0; k < truncated.size(); ++k) batch.timeout_values[t * n + truncated[k]] = terminal_values[k];
    }
  }

  Matrix final_atoms = state.critic.forward(envs.privileged_obs());
  batch.bootstrap_values = sorted_values(final_atoms, value_of);
  return batch;
}

GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda) {
  const std::size_t n = batch.n_envs;
  const std::size_t len = batch.length;
  if (batch.values.size() != n * len || batch.bootstrap_values.size() != n) {
    throw DimensionError("compute_gae: batch is missing values or bootstrap values");
  }
  GaeResult out;
  out.raw_advantages.assign(n * len, 0.0);
  out.value_targets.assign(n * len, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    double next_advantage = 0.0;
    for (std::size_t t = len; t-- > 0;) {
      const std::size_t k = t * n + e;
      const double next_value = t + 1 == len ? batch.bootstrap_values[e] : batch.values[(t + 1) * n + e];
      const double nonterminal = batch.dones[k] ? 0.0 : 1.0;
      double delta = batch.rewards[k] + gamma * next_value * nonterminal - batch.values[k];
      if (batch.timeouts[k]) delta += gamma * batch.timeout_values[k];
      const double advantage = delta + gamma * lambda * nonterminal * next_advantage;
      out.raw_advantages[k] = advantage;
      out.value_targets[k] = advantage + batch.values[k];
      next_advantage = advantage;
    }
  }
  out.advantages = normalize_advantages(out.raw_advantages);
  return out;
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  std::vector<double> out(advantages.begin(), advantages.end());
  if (out.empty()) return out;
  const double count = static_cast<double>(out.size());
  double mean = 0.0;
  for (double a : out) mean += a;
  mean /= count;
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / count);
  for (double& a : out) a = (a - mean) / (stddev + 1e-8);
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage);
}

ActorLossGrad actor_loss_and_grad(const GaussianPolicy& policy, const Matrix& obs, const Matrix& actions,
                                  std::span<const double> old_log_probs, std::span<const double> advantages,
                                  double clip_eps, double entropy_coeff) {
  const std::size_t batch = obs.cols;
  const std::size_t act_dim = policy.action_dim();
  if (actions.cols != batch || actions.rows != act_dim || old_log_probs.size() != batch ||
      advantages.size() != batch) {
    throw DimensionError("actor_loss_and_grad: minibatch shapes disagree");
  }
  MlpCache cache;
  const Matrix mean = policy.mean_net.forward(obs, cache);
  Matrix mean_grad(act_dim, batch);
  ActorLossGrad out;
  out.log_std_grad.assign(act_dim, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch);

  std::vector<double> mean_col, act_col;
  std::size_t clipped = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    mean_col = mean.column(b);
    act_col = actions.column(b);
    const double lp = gaussian_log_prob(mean_col, policy.log_std, act_col);
    const double ratio = std::exp(lp - old_log_probs[b]);
    const double adv = advantages[b];
    const double unclipped = ratio * adv;
    const double clipped_obj = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    out.loss -= std::min(unclipped, clipped_obj) * inv_b;
    out.mean_ratio += ratio * inv_b;
    if (std::abs(ratio - 1.0) > clip_eps) ++clipped;
    // d(-objective)/d(log_prob); zero when the clipped branch is the active minimum.
    const double d_lp = unclipped <= clipped_obj ? -unclipped * inv_b : 0.0;
    if (d_lp == 0.0) continue;
    for (std::size_t j = 0; j < act_dim; ++j) {
      const double sigma = std::exp(policy.log_std[j]);
      const double z = (act_col[j] - mean_col[j]) / sigma;
      mean_grad(j, b) = d_lp * z / sigma;
      out.log_std_grad[j] += d_lp * (z * z - 1.0);
    }
  }
  out.entropy = gaussian_entropy(policy.log_std);
  out.loss -= entropy_coeff * out.entropy;
  for (double& g : out.log_std_grad) g -= entropy_coeff;
  out.clip_fraction = static_cast<double>(clipped) * inv_b;
  out.mean_net_grad = policy.mean_net.backward(cache, mean_grad).params;
  return out;
}

CriticLossGrad critic_loss_and_grad(const Mlp& critic, const Matrix& obs, std::span<const double> targets) {
  const std::size_t batch = obs.cols;
  if (targets.size() != batch) throw DimensionError("critic_loss_and_grad: target count mismatch");
  MlpCache cache;
  const Matrix raw = critic.forward(obs, cache);
  const std::size_t n_atoms = raw.rows;
  Matrix out_grad(n_atoms, batch);
  CriticLossGrad out;
  const double inv_b = 1.0 / static_cast<double>(batch);
  std::vector<std::size_t> order(n_atoms);
  std::vector<double> sorted(n_atoms);
  for (std::size_t b = 0; b < batch; ++b) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return raw(i, b) < raw(j, b); });
    for (std::size_t i = 0; i < n_atoms; ++i) sorted[i] = raw(order[i], b);
    const auto ql = quantile_loss(std::span<const double>(sorted), targets[b]);
    out.loss += ql.loss * inv_b;
    for (std::size_t i = 0; i < n_atoms; ++i) out_grad(order[i], b) = ql.grad[i] * inv_b;
  }
  out.grad = critic.backward(cache, out_grad).params;
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> minibatches(std::vector<std::size_t>& index, std::size_t size,
                                                  std::mt19937_64& rng) {
  std::shuffle(index.begin(), index.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < index.size(); start += size) {
    const std::size_t end = std::min(index.size(), start + size);
    out.emplace_back(index.begin() + static_cast<std::ptrdiff_t>(start),
                     index.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

template <typename T>
std::vector<T> gather(std::span<const T> values, std::span<const std::size_t> index) {
  std::vector<T> out(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) out[k] = values[index[k]];
  return out;
}

void require_finite(double value, const char* what, std::int64_t iteration) {
  if (!std::isfinite(value)) {
    throw NumericalAbort(std::string(what) + " is not finite at iteration " + std::to_string(iteration));
  }
}

}  // namespace

ActorStats actor_update(const RolloutBatch& batch, std::span<const double> advantages, TrainState& state,
                        const PpoConfig& config) {
  if (advantages.size() != batch.size()) throw DimensionError("actor_update: advantage count mismatch");
  std::vector<std::size_t> index(batch.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  ActorStats stats;
  std::size_t updates = 0;
  const std::size_t n_net = state.policy.mean_net.num_params();
  std::vector<double> grad;
  for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
    double epoch_ratio = 0.0;
    std::size_t epoch_updates = 0;
    for (const auto& mb : minibatches(index, config.minibatch_size, state.shuffle_rng)) {
      const auto lg = actor_loss_and_grad(
          state.policy, batch.actor_obs.gather_columns(mb), batch.actions.gather_columns(mb),
          gather(std::span<const double>(batch.log_probs), mb), gather(advantages, mb), config.clip_eps,
          config.entropy_coeff);
      require_finite(lg.loss, "actor loss", state.iteration);
      grad = lg.mean_net_grad;
      grad.insert(grad.end(), lg.log_std_grad.begin(), lg.log_std_grad.end());
      clip_grad_norm(grad, config.max_grad_norm);
      adam_step(state.policy.mean_net.params(), std::span<const double>(grad).first(n_net), state.actor_opt);
      adam_step(state.policy.log_std, std::span<const double>(grad).subspan(n_net), state.log_std_opt);
      state.policy.clamp_log_std();

      stats.loss += lg.loss;
      stats.mean_ratio += lg.mean_ratio;
      stats.clip_fraction += lg.clip_fraction;
      stats.entropy += lg.entropy;
      epoch_ratio += lg.mean_ratio;
      ++updates;
      ++epoch_updates;
    }
    if (epoch == 0) stats.first_epoch_ratio = epoch_ratio / static_cast<double>(epoch_updates);
  }
  const double inv = 1.0 / static_cast<double>(updates);
  stats.loss *= inv;
  stats.mean_ratio *= inv;
  stats.clip_fraction *= inv;
  stats.entropy *= inv;
  return stats;
}

double batch_cv(const RolloutBatch& batch) {
  if (batch.quantiles.cols == 0) return 0.0;
  double sum = 0.0;
  std::vector<double> col;
  for (std::size_t c = 0; c < batch.quantiles.cols; ++c) {
    col = batch.quantiles.column(c);
    sum += coefficient_of_variation(col);
  }
  return sum / static_cast<double>(batch.quantiles.cols);
}

CriticStats critic_update(const RolloutBatch& batch, std::span<const double> value_targets, TrainState& state,
                          const PpoConfig& config) {
  if (value_targets.size() != batch.size()) throw DimensionError("critic_update: target count mismatch");
  for (double z : value_targets) require_finite(z, "value target", state.iteration);
  CriticStats stats;
  stats.mean_cv = batch_cv(batch);
  std::vector<std::size_t> index(batch.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::size_t updates = 0;
  for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
    for (const auto& mb : minibatches(index, config.minibatch_size, state.shuffle_rng)) {
      auto lg = critic_loss_and_grad(state.critic, batch.privileged_obs.gather_columns(mb), gather(value_targets, mb));
      require_finite(lg.loss, "critic loss", state.iteration);
      clip_grad_norm(lg.grad, config.max_grad_norm);
      adam_step(state.critic.params(), lg.grad, state.critic_opt);
      stats.loss += lg.loss;
      ++updates;
    }
  }
  stats.loss /= static_cast<double>(updates);
  return stats;
}

double update_risk(TrainState& state, const RolloutBatch& batch, const PpoConfig& config) {
  const double cv = batch_cv(batch);
  state.last_cv = cv;
  switch (config.risk_mode) {
    case RiskMode::Adaptive:
      state.alpha = adaptive_alpha(state.iteration, config.schedule(), cv);
      break;
    case RiskMode::ScalarPpo:
      state.alpha = 0.0;
      break;
    default:
      state.alpha = config.mode_alpha();
      break;
  }
  return state.alpha;
}

IterationStats train_iteration(TrainState& state, VecEnv& envs, const PpoConfig& config) {
  if (state.iteration >= config.total_iterations) {
    throw DomainError("train_iteration: iteration budget already exhausted");
  }
  const RolloutBatch batch = collect_rollouts(state, envs, config);
  update_risk(state, batch, config);
  const GaeResult gae = compute_gae(batch, config.gamma, config.gae_lambda);
  const ActorStats actor = actor_update(batch, gae.advantages, state, config);
  const CriticStats critic = critic_update(batch, gae.value_targets, state, config);

  IterationStats stats;
  stats.iteration = state.iteration;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    stats.total_reward += batch.env_rewards[k] * inv;
    stats.tracking_reward += batch.tracking[k] * inv;
    stats.episodes_finished += batch.dones[k];
  }
  stats.entropy = actor.entropy;
  stats.alpha = state.alpha;
  stats.batch_cv = state.last_cv;
  stats.clip_fraction = actor.clip_fraction;
  stats.critic_loss = critic.loss;
  stats.mean_ratio = actor.mean_ratio;
  ++state.iteration;
  return stats;
}

}  // namespace riskadapt
