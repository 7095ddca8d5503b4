#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "riskadapt/adam.hpp"
#include "riskadapt/checkpoint.hpp"
#include "riskadapt/errors.hpp"
#include "riskadapt/mlp.hpp"
#include "riskadapt/policy.hpp"

using namespace riskadapt;

namespace {

Mlp random_mlp(std::vector<std::size_t> dims, std::uint64_t seed) {
  Mlp net(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (double& p : net.params()) p = nd(rng);
  return net;
}

// Naive reference forward pass, one sample at a time.
std::vector<double> naive_forward(const Mlp& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weights(l);
    const auto b = net.bias(l);
    const std::size_t out = b.size(), in = x.size();
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * x[i];
      y[o] = s + b[o];
      if (l + 1 < net.num_layers()) y[o] = std::tanh(y[o]);
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

TEST_CASE("mlp forward examples") {
  Mlp zero({3, 4, 2});
  const auto z = zero.forward(std::vector<double>{1, 2, 3});
  CHECK(z == std::vector<double>{0, 0});

  Mlp id({2, 2});
  id.weights(0)[0] = 1;
  id.weights(0)[3] = 1;
  CHECK(id.forward(std::vector<double>{1, 2}) == std::vector<double>{1, 2});

  const Mlp net = random_mlp({2, 16, 3}, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 10; ++k) {
    std::vector<double> x{nd(rng), nd(rng)};
    const auto a = net.forward(x);
    const auto b = naive_forward(net, x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("mlp batch and single forward agree bitwise") {
  const Mlp net = random_mlp({8, 64, 64, 32}, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Matrix batch(8, 37);
  for (double& v : batch.data) v = nd(rng);
  const Matrix out = net.forward(batch);
  for (std::size_t c = 0; c < batch.cols; ++c) {
    const auto single = net.forward(batch.column(c));
    for (std::size_t r = 0; r < out.rows; ++r) CHECK(single[r] == out(r, c));
  }
}

TEST_CASE("mlp backward") {
  const Mlp net = random_mlp({4, 8, 1}, 9);
  Matrix x(4, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (double& v : x.data) v = nd(rng);

  MlpCache cache;
  net.forward(x, cache);
  const auto zero = net.backward(cache, Matrix(1, 3));
  for (double g : zero.params) CHECK(g == 0.0);

  // Loss = sum of outputs; gradient against central differences.
  const auto grads = net.backward(cache, Matrix(1, 3, 1.0));
  auto loss = [&](const Mlp& m) {
    double s = 0;
    for (double v : m.forward(x).data) s += v;
    return s;
  };
  Mlp probe = net;
  const double h = 1e-4;
  for (std::size_t k = 0; k < probe.num_params(); ++k) {
    const double orig = probe.params()[k];
    probe.params()[k] = orig + h;
    const double up = loss(probe);
    probe.params()[k] = orig - h;
    const double dn = loss(probe);
    probe.params()[k] = orig;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(fd - grads.params[k]) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }

  // Linear layer: weight gradient is the outer product.
  Mlp lin = random_mlp({3, 2}, 2);
  Matrix in = Matrix::from_column(std::vector<double>{1, -2, 0.5});
  MlpCache lc;
  lin.forward(in, lc);
  Matrix og = Matrix::from_column(std::vector<double>{0.3, -1.1});
  const auto lg = lin.backward(lc, og);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t i = 0; i < 3; ++i) CHECK(lg.params[o * 3 + i] == doctest::Approx(og.data[o] * in.data[i]));

  MlpCache stale;
  CHECK_THROWS_AS(net.backward(stale, Matrix(1, 3)), DimensionError);
}

TEST_CASE("orthogonal init") {
  std::mt19937_64 rng(0);
  const Mlp net = Mlp::orthogonal({5, 16, 16, 1}, 0.01, rng);
  // Hidden layer rows are orthogonal with norm sqrt(2) (16x5: columns orthonormal * gain).
  const auto w = net.weights(1);
  for (std::size_t a = 0; a < 16; ++a) {
    double dot = 0;
    for (std::size_t i = 0; i < 16; ++i) dot += w[a * 16 + i] * w[a * 16 + i];
    CHECK(dot == doctest::Approx(2.0).epsilon(1e-10));
  }
  for (double b : net.bias(0)) CHECK(b == 0.0);
}

TEST_CASE("adam") {
  std::vector<double> p{1.0, -2.0};
  AdamState s(2, 0.1);
  adam_step(p, std::vector<double>{0.0, 0.0}, s);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);

  std::vector<double> q{1.0};
  AdamState t(1, 0.01);
  adam_step(q, std::vector<double>{0.5}, t);
  // m_hat = g, v_hat = g^2: delta = -lr * g / (|g| + eps).
  CHECK(q[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));

  std::vector<double> a{0.3}, b{0.3};
  AdamState sa(1, 0.01), sb(1, 0.01);
  adam_step(a, std::vector<double>{0.7}, sa);
  adam_step(b, std::vector<double>{0.7}, sb);
  CHECK(a[0] == b[0]);

  std::vector<double> bad{0.0};
  AdamState sbad(1, 0.01);
  CHECK_THROWS_AS(adam_step(bad, std::vector<double>{NAN}, sbad), NumericalAbort);

  std::vector<double> g{3.0, 4.0};
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
}

TEST_CASE("gaussian policy") {
  std::mt19937_64 rng(2);
  GaussianPolicy pol{Mlp::orthogonal({3, 8, 2}, 0.01, rng), {0.1, -0.3}};
  const std::vector<double> obs{0.2, -0.1, 0.4};
  const auto at_mean = sample_action(pol, obs, std::vector<double>{0.0, 0.0});
  const auto mean = pol.mean_net.forward(obs);
  CHECK(at_mean.action == mean);
  CHECK(at_mean.log_prob == doctest::Approx(-(0.1 - 0.3) - std::log(2 * std::numbers::pi)).epsilon(1e-14));

  const std::vector<double> noise{0.7, -1.3};
  const auto s = sample_action(pol, obs, noise);
  CHECK(log_prob_and_entropy(pol, obs, s.action).log_prob == s.log_prob);

  // Independent density formula.
  double ref = 0;
  for (int i = 0; i < 2; ++i) {
    const double sd = std::exp(pol.log_std[i]);
    const double z = (s.action[i] - mean[i]) / sd;
    ref += std::log(1.0 / (sd * std::sqrt(2 * std::numbers::pi))) - 0.5 * z * z;
  }
  CHECK(std::abs(ref - s.log_prob) < 1e-12);

  const std::vector<double> m2{mean[0] + 3, mean[1] - 1}, a2{s.action[0] + 3, s.action[1] - 1};
  CHECK(gaussian_log_prob(m2, pol.log_std, a2) == doctest::Approx(s.log_prob).epsilon(1e-13));

  CHECK(std::abs(gaussian_entropy(std::vector<double>{0.0}) - 1.41893853320467274) < 1e-12);
  CHECK(gaussian_entropy(std::vector<double>{std::log(2.0), std::log(2.0)}) ==
        doctest::Approx(gaussian_entropy(std::vector<double>{0.0, 0.0}) + 2 * std::log(2.0)));
}

TEST_CASE("critic forward") {
  Mlp zero({4, 8, 32});
  const auto d = critic_forward(zero, std::vector<double>{1, 2, 3, 4});
  CHECK(d.size() == 32);
  CHECK(d.mean() == 0.0);
  CHECK(coefficient_of_variation(d) == 0.0);

  Mlp lin({1, 3});
  lin.bias(0)[0] = 3;
  lin.bias(0)[1] = 1;
  lin.bias(0)[2] = 2;
  const auto s = critic_forward(lin, std::vector<double>{0});
  CHECK(std::vector<double>(s.values().begin(), s.values().end()) == std::vector<double>{1, 2, 3});
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(8);
  Checkpoint c;
  c.policy = {Mlp::orthogonal({5, 6, 1}, 0.01, rng), {-0.4}};
  c.critic = Mlp::orthogonal({8, 6, 4}, 1.0, rng);
  c.actor_opt = AdamState(c.policy.mean_net.num_params(), 3e-4);
  c.actor_opt.m[2] = 0.25;
  c.actor_opt.step = 7;
  c.log_std_opt = AdamState(1, 3e-4);
  c.critic_opt = AdamState(c.critic.num_params(), 1e-3);
  c.iteration = 12;
  c.alpha = -0.13;
  c.last_cv = 0.04;
  c.config_json = "{\"a\": 1}";
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint r = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(r) == bytes);
  CHECK(r.alpha == c.alpha);
  CHECK(r.actor_opt.m[2] == 0.25);
  CHECK(r.config_json == c.config_json);

  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CheckpointError);
  std::string wrong = bytes;
  wrong[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(wrong), CheckpointError);
}
