#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "riskadapt/balancer.hpp"
#include "riskadapt/dppo.hpp"
#include "riskadapt/errors.hpp"
#include "riskadapt/harness/config.hpp"
#include "riskadapt/harness/run.hpp"
#include "riskadapt/normal.hpp"
#include "riskadapt/risk_core.hpp"

namespace py = pybind11;
using namespace riskadapt;

namespace {

DistortionMeasure measure_of(const std::string& kind, double level) {
  if (kind == "neutral") return DistortionMeasure::neutral();
  if (kind == "wang") return DistortionMeasure::wang(level);
  if (kind == "cvar") return DistortionMeasure::cvar(level);
  throw DomainError("unknown distortion '" + kind + "' (neutral, wang or cvar)");
}

py::dict stats_dict(const IterationStats& s) {
  py::dict d;
  d["iteration"] = s.iteration;
  d["total_reward"] = s.total_reward;
  d["tracking_reward"] = s.tracking_reward;
  d["entropy"] = s.entropy;
  d["alpha"] = s.alpha;
  d["batch_cv"] = s.batch_cv;
  d["clip_fraction"] = s.clip_fraction;
  d["critic_loss"] = s.critic_loss;
  return d;
}

py::dict metrics_dict(const MetricsRecord& r) {
  py::dict d;
  d["run_id"] = r.run_id;
  d["risk_mode"] = r.risk_mode;
  d["seed"] = r.seed;
  d["target_velocity"] = r.target_velocity ? py::cast(*r.target_velocity) : py::none();
  d["ood"] = r.ood;
  d["success_rate"] = r.success_rate;
  d["x_rmse"] = r.x_rmse;
  d["mean_return"] = r.mean_return;
  d["mean_cv"] = r.mean_cv;
  d["success_drop"] = r.success_drop;
  return d;
}

harness::ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                                      const std::vector<std::string>& overrides) {
  return harness::resolve_config(path, overrides);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distortion-risk distributional PPO core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericalAbort>(m, "NumericalAbort", PyExc_ArithmeticError);

  m.def("normal_cdf", &normal_cdf, py::arg("x"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def("wang_distortion", &wang_distortion, py::arg("tau"), py::arg("alpha"));
  m.def("cvar_distortion", &cvar_distortion, py::arg("tau"), py::arg("beta"));
  m.def(
      "distortion_weights",
      [](std::size_t n, const std::string& kind, double level) { return distortion_weights(n, measure_of(kind, level)); },
      py::arg("n"), py::arg("kind") = "neutral", py::arg("level") = 0.0);
  m.def(
      "distorted_value",
      [](std::vector<double> atoms, const std::string& kind, double level) {
        return distorted_value(QuantileDistribution(std::move(atoms)), measure_of(kind, level));
      },
      py::arg("atoms"), py::arg("kind") = "neutral", py::arg("level") = 0.0,
      "Distorted expectation of the atoms (sorted first).");
  m.def(
      "quantile_loss",
      [](const std::vector<double>& atoms, double target) {
        const auto r = quantile_loss(std::span<const double>(atoms), target);
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("atoms"), py::arg("target"), "Returns (loss, gradient) for atoms in the given order.");
  m.def(
      "coefficient_of_variation",
      [](const std::vector<double>& values) { return coefficient_of_variation(std::span<const double>(values)); },
      py::arg("values"));
  m.def(
      "adaptive_alpha",
      [](std::int64_t t, double cv, double alpha_0, double alpha_T, std::int64_t total_steps) {
        return adaptive_alpha(t, RiskSchedule{alpha_0, alpha_T, total_steps}, cv);
      },
      py::arg("t"), py::arg("cv"), py::arg("alpha_0") = 0.0, py::arg("alpha_T") = -0.2,
      py::arg("total_steps") = 1000);

  m.def(
      "compute_gae",
      [](std::vector<double> rewards, std::vector<double> values, std::vector<std::uint8_t> dones,
         std::vector<double> bootstrap_values, double gamma, double lam, std::optional<std::vector<std::uint8_t>> timeouts,
         std::optional<std::vector<double>> timeout_values) {
        RolloutBatch b;
        b.n_envs = bootstrap_values.size();
        if (b.n_envs == 0 || rewards.size() % b.n_envs != 0) {
          throw DimensionError("compute_gae: length must be a multiple of len(bootstrap_values)");
        }
        b.length = rewards.size() / b.n_envs;
        b.rewards = std::move(rewards);
        b.values = std::move(values);
        b.dones = std::move(dones);
        b.bootstrap_values = std::move(bootstrap_values);
        b.timeouts = timeouts ? std::move(*timeouts) : std::vector<std::uint8_t>(b.size(), 0);
        b.timeout_values = timeout_values ? std::move(*timeout_values) : std::vector<double>(b.size(), 0.0);
        if (b.values.size() != b.size() || b.dones.size() != b.size() || b.timeouts.size() != b.size() ||
            b.timeout_values.size() != b.size()) {
          throw DimensionError("compute_gae: per-transition arrays differ in length");
        }
        const auto g = compute_gae(b, gamma, lam);
        return py::make_tuple(g.raw_advantages, g.advantages, g.value_targets);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap_values"), py::arg("gamma") = 0.99,
      py::arg("lam") = 0.95, py::arg("timeouts") = py::none(), py::arg("timeout_values") = py::none(),
      "Time-major arrays (index t * n_envs + e). Returns (raw, normalized, targets).");
  m.def("clipped_surrogate", &clipped_surrogate, py::arg("ratio"), py::arg("advantage"), py::arg("clip_eps"));

  py::class_<BalancerState>(m, "BalancerState")
      .def(py::init<>())
      .def_readwrite("x", &BalancerState::x)
      .def_readwrite("v", &BalancerState::v)
      .def_readwrite("p", &BalancerState::p)
      .def_readwrite("p_dot", &BalancerState::p_dot)
      .def_readwrite("t_step", &BalancerState::t_step)
      .def_readwrite("friction_coeff", &BalancerState::friction_coeff)
      .def_readwrite("mass_scale", &BalancerState::mass_scale)
      .def_readwrite("active_push", &BalancerState::active_push)
      .def_readwrite("last_action", &BalancerState::last_action);

  py::class_<Command>(m, "Command")
      .def(py::init<>())
      .def(py::init([](double vx_c) { return Command{vx_c, 0.0}; }), py::arg("vx_c"))
      .def_readwrite("vx_c", &Command::vx_c)
      .def_readwrite("p_c", &Command::p_c);

  py::class_<RewardBreakdown>(m, "RewardBreakdown")
      .def_readonly("base_pitch", &RewardBreakdown::base_pitch)
      .def_readonly("upright_balance", &RewardBreakdown::upright_balance)
      .def_readonly("linear_tracking", &RewardBreakdown::linear_tracking)
      .def_readonly("support_polygon", &RewardBreakdown::support_polygon)
      .def_readonly("action_smoothness", &RewardBreakdown::action_smoothness)
      .def_readonly("energy", &RewardBreakdown::energy)
      .def_readonly("r_plus", &RewardBreakdown::r_plus)
      .def_readonly("r_minus", &RewardBreakdown::r_minus)
      .def_readonly("total", &RewardBreakdown::total);

  py::class_<BalancerStep>(m, "BalancerStep")
      .def_readonly("state", &BalancerStep::state)
      .def_readonly("reward", &BalancerStep::reward)
      .def_readonly("done", &BalancerStep::done)
      .def_readonly("crashed", &BalancerStep::crashed)
      .def_readonly("timeout", &BalancerStep::timeout)
      .def_readonly("actor_obs", &BalancerStep::actor_obs)
      .def_readonly("privileged_obs", &BalancerStep::privileged_obs);

  // The balancer is configured through the env section of an experiment
  // config, so Python and the CLI accept the same keys.
  py::class_<BalancerConfig>(m, "BalancerConfig")
      .def(py::init([](const std::vector<std::string>& overrides) { return load_config(std::nullopt, overrides).env; }),
           py::arg("overrides") = std::vector<std::string>{}, "Built from env.* overrides such as 'env.horizon=100'.")
      .def_readonly("dt", &BalancerConfig::dt)
      .def_readonly("horizon", &BalancerConfig::horizon)
      .def_readonly("torque_limit", &BalancerConfig::torque_limit)
      .def_readonly("crash_pitch", &BalancerConfig::crash_pitch);

  m.def(
      "balancer_reset",
      [](const BalancerConfig& config, std::uint64_t seed) {
        const auto r = reset(config, seed);
        return py::make_tuple(r.state, r.command, r.actor_obs, r.privileged_obs);
      },
      py::arg("config"), py::arg("seed"), "Returns (state, command, actor_obs, privileged_obs).");
  m.def("balancer_step", &step, py::arg("config"), py::arg("state"), py::arg("command"), py::arg("action"));
  m.def("compute_reward", &compute_reward, py::arg("config"), py::arg("state"), py::arg("command"),
        py::arg("action"), py::arg("last_action"));

  m.def(
      "resolve_config",
      [](std::optional<std::filesystem::path> path, const std::vector<std::string>& overrides) {
        return harness::to_json(load_config(path, overrides)).dump(2);
      },
      py::arg("path") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Fully resolved configuration as a JSON string.");
  m.def(
      "train",
      [](std::optional<std::filesystem::path> path, const std::vector<std::string>& overrides) {
        const auto config = load_config(path, overrides);
        harness::TrainingResult r;
        {
          py::gil_scoped_release release;
          r = harness::train_run(config);
        }
        py::dict out;
        out["run_dir"] = r.run_dir;
        py::list stats;
        for (const auto& s : r.stats) stats.append(stats_dict(s));
        out["stats"] = stats;
        py::list metrics;
        for (const auto& e : r.final_eval) metrics.append(metrics_dict(e));
        out["final_eval"] = metrics;
        return out;
      },
      py::arg("path") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Runs training and writes the usual run directory. Returns run_dir, stats and final_eval.");
  m.def(
      "evaluate_checkpoint",
      [](const std::filesystem::path& checkpoint, const std::vector<std::string>& overrides) {
        const auto run = harness::load_run(checkpoint, overrides);
        std::vector<MetricsRecord> rows;
        {
          py::gil_scoped_release release;
          rows = harness::evaluate_policy(run.checkpoint.policy, run.checkpoint.critic, run.config);
        }
        py::list out;
        for (const auto& r : rows) out.append(metrics_dict(r));
        return out;
      },
      py::arg("checkpoint"), py::arg("overrides") = std::vector<std::string>{},
      "Velocity-grid evaluation; the last row is the aggregate.");
}
