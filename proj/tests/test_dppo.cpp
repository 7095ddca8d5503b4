#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "riskadapt/balancer.hpp"
#include "riskadapt/dppo.hpp"
#include "riskadapt/errors.hpp"
#include "riskadapt/risky_choice.hpp"

using namespace riskadapt;

namespace {

PpoConfig small_config() {
  PpoConfig c;
  c.n_envs = 8;
  c.rollout_length = 16;
  c.minibatch_size = 32;
  c.update_epochs = 2;
  c.actor_hidden = {16};
  c.critic_hidden = {16};
  c.n_quantiles = 8;
  c.total_iterations = 10;
  return c;
}

RolloutBatch random_batch(std::size_t n, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution end(0.15);
  RolloutBatch b;
  b.n_envs = n;
  b.length = len;
  const std::size_t total = n * len;
  b.rewards.resize(total);
  b.values.resize(total);
  b.dones.resize(total);
  b.timeouts.resize(total);
  b.timeout_values.assign(total, 0.0);
  b.bootstrap_values.resize(n);
  for (std::size_t k = 0; k < total; ++k) {
    b.rewards[k] = u(rng);
    b.values[k] = u(rng);
    b.dones[k] = end(rng);
    if (b.dones[k] && end(rng)) {
      b.timeouts[k] = 1;
      b.timeout_values[k] = u(rng);
    }
  }
  for (double& v : b.bootstrap_values) v = u(rng);
  return b;
}

// Expands A_t = sum_l (gamma lambda)^l delta_{t+l}, stopping after the first
// terminal transition.
std::vector<double> brute_force_gae(const RolloutBatch& b, double gamma, double lambda) {
  const std::size_t n = b.n_envs, len = b.length;
  auto delta = [&](std::size_t t, std::size_t e) {
    const std::size_t k = t * n + e;
    double next = 0.0;
    if (b.timeouts[k]) {
      next = b.timeout_values[k];
    } else if (!b.dones[k]) {
      next = t + 1 == len ? b.bootstrap_values[e] : b.values[(t + 1) * n + e];
    }
    return b.rewards[k] + gamma * next - b.values[k];
  };
  std::vector<double> out(n * len);
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t t = 0; t < len; ++t) {
      double sum = 0.0;
      double w = 1.0;
      for (std::size_t s = t; s < len; ++s) {
        sum += w * delta(s, e);
        if (b.dones[s * n + e]) break;
        w *= gamma * lambda;
      }
      out[t * n + e] = sum;
    }
  }
  return out;
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.data) x = nd(rng);
  return m;
}

}  // namespace

TEST_CASE("risk mode names round-trip") {
  for (auto m : {RiskMode::Adaptive, RiskMode::FixedNeutral, RiskMode::FixedAverse, RiskMode::FixedSeeking,
                 RiskMode::ScalarPpo}) {
    CHECK(parse_risk_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_risk_mode("cautious"), ConfigError);
}

TEST_CASE("config validation") {
  PpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip_eps = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PpoConfig{};
  c.risk_mode = RiskMode::FixedAverse;
  c.fixed_alpha = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PpoConfig{};
  c.risk_mode = RiskMode::ScalarPpo;
  CHECK(c.effective_quantiles() == 1);
  c.risk_mode = RiskMode::FixedAverse;
  CHECK(c.mode_alpha() == 0.2);
  c.risk_mode = RiskMode::FixedSeeking;
  CHECK(c.mode_alpha() == -0.2);
}

TEST_CASE("gae: terminal one-step") {
  RolloutBatch b;
  b.n_envs = 1;
  b.length = 1;
  b.rewards = {1.0};
  b.values = {0.0};
  b.dones = {1};
  b.timeouts = {0};
  b.timeout_values = {0.0};
  b.bootstrap_values = {5.0};
  const auto g = compute_gae(b, 0.99, 0.95);
  CHECK(g.raw_advantages[0] == 1.0);
  CHECK(g.value_targets[0] == 1.0);
}

TEST_CASE("gae: lambda 0 is the TD error") {
  const auto b = random_batch(3, 10, 1);
  const auto g = compute_gae(b, 0.9, 0.0);
  const auto bf = brute_force_gae(b, 0.9, 0.0);
  for (std::size_t k = 0; k < bf.size(); ++k) CHECK(std::abs(g.raw_advantages[k] - bf[k]) < 1e-12);
}

TEST_CASE("gae: matches the expanded sum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = random_batch(4, 10, seed);
    const auto g = compute_gae(b, 0.99, 0.95);
    const auto bf = brute_force_gae(b, 0.99, 0.95);
    for (std::size_t k = 0; k < bf.size(); ++k) {
      CHECK(std::abs(g.raw_advantages[k] - bf[k]) < 1e-10);
      CHECK(g.value_targets[k] == g.raw_advantages[k] + b.values[k]);
    }
  }
}

TEST_CASE("gae: normalization") {
  const auto a = normalize_advantages(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  double mean = 0.0, sq = 0.0;
  for (double x : a) mean += x / 4.0;
  for (double x : a) sq += x * x / 4.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(sq == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == -1.5);
  CHECK(clipped_surrogate(1.0, 2.0, 0.2) == 2.0);
}

TEST_CASE("actor loss: ratio one and zero advantage") {
  std::mt19937_64 rng(3);
  GaussianPolicy pi{Mlp::orthogonal({3, 8, 1}, 1.0, rng), {-0.3}};
  const Matrix obs = random_matrix(3, 6, 4);
  const Matrix mean = pi.mean_net.forward(obs);
  Matrix actions = random_matrix(1, 6, 5);
  std::vector<double> old_lp(6);
  for (std::size_t b = 0; b < 6; ++b) {
    old_lp[b] = gaussian_log_prob(mean.column(b), pi.log_std, actions.column(b));
  }
  const std::vector<double> adv{0.5, -1.0, 2.0, 0.1, -0.4, 1.0};
  const auto r = actor_loss_and_grad(pi, obs, actions, old_lp, adv, 0.2, 0.0);
  CHECK(r.mean_ratio == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.clip_fraction == 0.0);
  double expected = 0.0;
  for (double a : adv) expected -= a / 6.0;
  CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));

  const std::vector<double> zero(6, 0.0);
  const auto z = actor_loss_and_grad(pi, obs, actions, old_lp, zero, 0.2, 0.005);
  CHECK(z.loss == doctest::Approx(-0.005 * gaussian_entropy(pi.log_std)).epsilon(1e-14));
  for (double g : z.mean_net_grad) CHECK(g == 0.0);
}

TEST_CASE("actor loss: gradient matches finite differences") {
  std::mt19937_64 rng(8);
  GaussianPolicy pi{Mlp::orthogonal({3, 6, 2}, 1.0, rng), {-0.2, 0.1}};
  const Matrix obs = random_matrix(3, 5, 9);
  const Matrix actions = random_matrix(2, 5, 10);
  // Old log-probs far from the current ones would put samples on the clip
  // boundary's flat side; keep ratios near 1.
  const Matrix mean = pi.mean_net.forward(obs);
  std::vector<double> old_lp(5);
  for (std::size_t b = 0; b < 5; ++b) {
    old_lp[b] = gaussian_log_prob(mean.column(b), pi.log_std, actions.column(b)) + 0.05 * (b % 2 ? 1 : -1);
  }
  const std::vector<double> adv{0.7, -0.2, 1.1, -0.9, 0.3};
  const auto r = actor_loss_and_grad(pi, obs, actions, old_lp, adv, 0.2, 0.01);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pi.mean_net.num_params(); ++i) {
    GaussianPolicy p = pi, m = pi;
    p.mean_net.params()[i] += h;
    m.mean_net.params()[i] -= h;
    const double fd = (actor_loss_and_grad(p, obs, actions, old_lp, adv, 0.2, 0.01).loss -
                       actor_loss_and_grad(m, obs, actions, old_lp, adv, 0.2, 0.01).loss) /
                      (2 * h);
    CHECK(r.mean_net_grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-8));
  }
  for (std::size_t j = 0; j < 2; ++j) {
    GaussianPolicy p = pi, m = pi;
    p.log_std[j] += h;
    m.log_std[j] -= h;
    const double fd = (actor_loss_and_grad(p, obs, actions, old_lp, adv, 0.2, 0.01).loss -
                       actor_loss_and_grad(m, obs, actions, old_lp, adv, 0.2, 0.01).loss) /
                      (2 * h);
    CHECK(r.log_std_grad[j] == doctest::Approx(fd).epsilon(1e-5).scale(1e-8));
  }
}

TEST_CASE("critic loss: atoms at the target give zero loss and gradient") {
  Mlp critic({2, 4});
  for (std::size_t i = 0; i < 4; ++i) critic.bias(0)[i] = 0.7;
  const Matrix obs = random_matrix(2, 3, 1);
  const auto r = critic_loss_and_grad(critic, obs, std::vector<double>{0.7, 0.7, 0.7});
  CHECK(r.loss == 0.0);
  for (double g : r.grad) CHECK(g == 0.0);
}

TEST_CASE("critic loss: gradient matches finite differences") {
  // Three parameters: two weights and a bias, one atom.
  Mlp tiny({2, 1});
  const std::vector<double> init{0.4, -0.3, 0.1};
  std::copy(init.begin(), init.end(), tiny.params().begin());
  const Matrix obs = random_matrix(2, 4, 2);
  const std::vector<double> targets{1.0, -2.0, 0.5, 3.0};
  std::mt19937_64 rng(3);
  for (const Mlp& net : {tiny, Mlp::orthogonal({2, 5, 4}, 1.0, rng)}) {
    const auto r = critic_loss_and_grad(net, obs, targets);
    const double h = 1e-6;
    for (std::size_t i = 0; i < net.num_params(); ++i) {
      Mlp p = net, m = net;
      p.params()[i] += h;
      m.params()[i] -= h;
      const double fd = (critic_loss_and_grad(p, obs, targets).loss - critic_loss_and_grad(m, obs, targets).loss) /
                        (2 * h);
      CHECK(r.grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-8));
    }
  }
}

TEST_CASE("critic loss: atoms collapse onto a point-mass target") {
  std::mt19937_64 rng(6);
  Mlp critic = Mlp::orthogonal({2, 16, 8}, 1.0, rng);
  AdamState opt(critic.num_params(), 1e-3);
  const Matrix obs = random_matrix(2, 1, 7);
  const double z = 0.6;
  const std::vector<double> targets{z};
  for (int it = 0; it < 500; ++it) {
    const auto r = critic_loss_and_grad(critic, obs, targets);
    adam_step(critic.params(), r.grad, opt);
  }
  const Matrix out = critic.forward(obs);
  double worst = 0.0;
  for (double a : out.data) worst = std::max(worst, std::abs(a - z));
  CHECK(worst < 0.01);
}

TEST_CASE("rollouts: single transition and stored values") {
  auto cfg = small_config();
  cfg.n_envs = 1;
  cfg.rollout_length = 1;
  auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 3);
  BalancerVecEnv env(BalancerConfig{}, 1, 3);
  const auto b = collect_rollouts(state, env, cfg);
  CHECK(b.size() == 1);
  CHECK(b.rewards.size() == 1);
}

TEST_CASE("rollouts: stored values are the distorted value of the stored atoms") {
  auto cfg = small_config();
  cfg.risk_mode = RiskMode::FixedAverse;
  auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 5);
  BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 5);
  const auto b = collect_rollouts(state, env, cfg);
  CHECK(b.alpha == 0.2);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto atoms = critic_forward(state.critic, b.privileged_obs.column(k));
    CHECK(distorted_value(atoms, DistortionMeasure::wang(0.2)) == b.values[k]);
    CHECK(distorted_value(QuantileDistribution(b.quantiles.column(k)), b.measure) == b.values[k]);
  }
}

TEST_CASE("rollouts: deterministic for a fixed seed") {
  const auto cfg = small_config();
  auto run = [&] {
    auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 11);
    BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 11);
    return collect_rollouts(state, env, cfg);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.actions.data == b.actions.data);
  CHECK(a.rewards == b.rewards);
  CHECK(a.values == b.values);
}

TEST_CASE("risk update by mode") {
  auto cfg = small_config();
  cfg.risk_mode = RiskMode::FixedAverse;
  auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 2);
  BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 2);
  for (int i = 0; i < 3; ++i) CHECK(train_iteration(state, env, cfg).alpha == 0.2);

  SUBCASE("adaptive at t = 0 is alpha_0") {
    auto ac = small_config();
    auto st = make_train_state(ac, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 2);
    CHECK(st.alpha == 0.0);
    BalancerVecEnv e(BalancerConfig{}, ac.n_envs, 2);
    const auto b = collect_rollouts(st, e, ac);
    CHECK(update_risk(st, b, ac) == 0.0);
  }

  SUBCASE("adaptive at t = T with constant atoms is alpha_T") {
    auto ac = small_config();
    auto st = make_train_state(ac, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 2);
    // Zero the critic's last layer: every atom equals 0, CV 0.
    for (double& w : st.critic.weights(st.critic.num_layers() - 1)) w = 0.0;
    for (double& b : st.critic.bias(st.critic.num_layers() - 1)) b = 0.0;
    BalancerVecEnv e(BalancerConfig{}, ac.n_envs, 2);
    const auto b = collect_rollouts(st, e, ac);
    CHECK(batch_cv(b) == 0.0);
    st.iteration = ac.total_iterations;
    CHECK(std::abs(update_risk(st, b, ac) - ac.alpha_T) < 1e-9);
  }
}

TEST_CASE("adaptive alpha stays within [alpha_T, alpha_0]") {
  auto cfg = small_config();
  auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 4);
  BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 4);
  for (int i = 0; i < 10; ++i) {
    const auto s = train_iteration(state, env, cfg);
    CHECK(s.alpha <= cfg.alpha_0);
    CHECK(s.alpha >= cfg.alpha_T);
    CHECK(s.clip_fraction >= 0.0);
    CHECK(s.clip_fraction <= 1.0);
    for (double p : state.policy.mean_net.params()) CHECK(std::isfinite(p));
  }
  CHECK_THROWS_AS(train_iteration(state, env, cfg), DomainError);
}

TEST_CASE("zero learning rates leave parameters unchanged") {
  auto cfg = small_config();
  cfg.actor_lr = 0.0;
  cfg.critic_lr = 0.0;
  auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 6);
  const auto actor = to_vector(state.policy.mean_net.params());
  const auto critic = to_vector(state.critic.params());
  const auto log_std = state.policy.log_std;
  BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 6);
  const auto s = train_iteration(state, env, cfg);
  CHECK(to_vector(state.policy.mean_net.params()) == actor);
  CHECK(to_vector(state.critic.params()) == critic);
  CHECK(state.policy.log_std == log_std);
  CHECK(std::isfinite(s.total_reward));
  CHECK(s.iteration == 0);
  CHECK(state.iteration == 1);
}

TEST_CASE("first-epoch ratio is one before any step") {
  auto cfg = small_config();
  cfg.update_epochs = 1;
  cfg.minibatch_size = cfg.n_envs * cfg.rollout_length;
  auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 7);
  BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 7);
  const auto b = collect_rollouts(state, env, cfg);
  const auto g = compute_gae(b, cfg.gamma, cfg.gae_lambda);
  const auto a = actor_update(b, g.advantages, state, cfg);
  CHECK(a.first_epoch_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.clip_fraction == 0.0);
}

TEST_CASE("one atom makes fixed_neutral and scalar_ppo identical") {
  auto run = [](RiskMode mode) {
    auto cfg = small_config();
    cfg.n_quantiles = 1;
    cfg.risk_mode = mode;
    auto state = make_train_state(cfg, kBalancerActorObsDim, kBalancerPrivilegedObsDim, 1, 9);
    BalancerVecEnv env(BalancerConfig{}, cfg.n_envs, 9);
    std::vector<double> trace;
    for (int i = 0; i < 3; ++i) {
      const auto b = collect_rollouts(state, env, cfg);
      const auto g = compute_gae(b, cfg.gamma, cfg.gae_lambda);
      trace.insert(trace.end(), g.advantages.begin(), g.advantages.end());
      update_risk(state, b, cfg);
      actor_update(b, g.advantages, state, cfg);
      critic_update(b, g.value_targets, state, cfg);
      ++state.iteration;
    }
    trace.insert(trace.end(), state.critic.params().begin(), state.critic.params().end());
    return trace;
  };
  CHECK(run(RiskMode::FixedNeutral) == run(RiskMode::ScalarPpo));
}

TEST_CASE("risky choice training: averse picks safe, seeking picks risky") {
  auto cfg = small_config();
  cfg.n_envs = 32;
  cfg.rollout_length = 8;
  cfg.minibatch_size = 128;
  cfg.update_epochs = 4;
  cfg.gae_lambda = 0.0;
  cfg.total_iterations = 150;
  auto train = [&](RiskMode mode, double alpha) {
    auto c = cfg;
    c.risk_mode = mode;
    c.fixed_alpha = alpha;
    auto state = make_train_state(c, 3, 3, 1, 1);
    RiskyChoiceVecEnv env(c.n_envs, 1);
    for (std::int64_t i = 0; i < c.total_iterations; ++i) train_iteration(state, env, c);
    return risky_arm_probability(state.policy);
  };
  CHECK(train(RiskMode::FixedAverse, 0.5) < 0.5);
  CHECK(train(RiskMode::FixedSeeking, -0.5) > 0.5);
}
