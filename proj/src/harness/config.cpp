#include "riskadapt/harness/config.hpp"

#include <fstream>
#include <type_traits>

#include "riskadapt/errors.hpp"

namespace riskadapt::harness {

using json = nlohmann::ordered_json;

std::string to_string(EnvKind kind) { return kind == EnvKind::Balancer ? "balancer" : "risky_choice"; }

namespace {

EnvKind parse_env_kind(const std::string& name) {
  if (name == "balancer") return EnvKind::Balancer;
  if (name == "risky_choice") return EnvKind::RiskyChoice;
  throw ConfigError("env.kind", "expected balancer or risky_choice, got '" + name + "'");
}

// Every configurable field, once. Used for both directions.
template <typename Config, typename Visit>
void visit_fields(Config& c, Visit&& v) {
  v("env.kind", c.env_kind);
  auto& e = c.env;
  v("env.dt", e.dt);
  v("env.physics_substeps", e.physics_substeps);
  v("env.pole_length", e.pole_length);
  v("env.body_mass", e.body_mass);
  v("env.wheel_mass", e.wheel_mass);
  v("env.wheel_radius", e.wheel_radius);
  v("env.gravity", e.gravity);
  v("env.friction_min", e.friction_min);
  v("env.friction_max", e.friction_max);
  v("env.mass_scale_min", e.mass_scale_min);
  v("env.mass_scale_max", e.mass_scale_max);
  v("env.torque_limit", e.torque_limit);
  v("env.crash_pitch", e.crash_pitch);
  v("env.horizon", e.horizon);
  v("env.init_perturbation", e.init_perturbation);
  v("env.command_min", e.command_min);
  v("env.command_max", e.command_max);
  v("env.reward.sigma", e.reward.sigma);
  v("env.reward.sigma_yaw", e.reward.sigma_yaw);
  v("env.reward.upright_pitch", e.reward.upright_pitch);
  v("env.reward.smoothness_weight", e.reward.smoothness_weight);
  v("env.reward.energy_weight", e.reward.energy_weight);
  v("env.reward.exp_coeff", e.reward.exp_coeff);
  v("env.reward.literal_base_pitch", e.reward.literal_base_pitch);
  v("env.disturbance.enabled", e.disturbance.enabled);
  v("env.disturbance.interval", e.disturbance.interval);
  v("env.disturbance.duration", e.disturbance.duration);
  v("env.disturbance.magnitudes", e.disturbance.magnitudes);
  auto& a = c.algo;
  v("algo.risk_mode", a.risk_mode);
  v("algo.fixed_alpha", a.fixed_alpha);
  v("algo.alpha_0", a.alpha_0);
  v("algo.alpha_T", a.alpha_T);
  v("algo.clip_eps", a.clip_eps);
  v("algo.gamma", a.gamma);
  v("algo.gae_lambda", a.gae_lambda);
  v("algo.actor_lr", a.actor_lr);
  v("algo.critic_lr", a.critic_lr);
  v("algo.update_epochs", a.update_epochs);
  v("algo.minibatch_size", a.minibatch_size);
  v("algo.entropy_coeff", a.entropy_coeff);
  v("algo.max_grad_norm", a.max_grad_norm);
  v("algo.n_quantiles", a.n_quantiles);
  v("algo.rollout_length", a.rollout_length);
  v("algo.n_envs", a.n_envs);
  v("algo.total_iterations", a.total_iterations);
  v("algo.actor_hidden", a.actor_hidden);
  v("algo.critic_hidden", a.critic_hidden);
  v("algo.init_log_std", a.init_log_std);
  v("algo.reward_scale", a.reward_scale);
  auto& r = c.run;
  v("run.seed", r.seed);
  v("run.out", r.out);
  v("run.run_id", r.run_id);
  v("run.checkpoint_interval", r.checkpoint_interval);
  v("run.eval_interval", r.eval_interval);
  v("run.eval_envs", r.eval_envs);
  v("run.eval_steps", r.eval_steps);
  v("run.eval_velocities", r.eval_velocities);
  v("run.eval_pushes", r.eval_pushes);
  v("run.eval_seed", r.eval_seed);
  v("run.workers", r.workers);
}

json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const auto part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(dotted, "malformed key");
    p += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return json::json_pointer(p);
}

json encode(EnvKind k) { return to_string(k); }
json encode(RiskMode m) { return to_string(m); }
json encode(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
template <typename T>
json encode(const T& v) {
  return json(v);
}

template <typename T>
void decode(const std::string& key, const json& j, T& out) {
  try {
    if constexpr (std::is_same_v<T, EnvKind>) {
      if (!j.is_string()) throw ConfigError(key, "expected a string");
      out = parse_env_kind(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, RiskMode>) {
      if (!j.is_string()) throw ConfigError(key, "expected a string");
      out = parse_risk_mode(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      if (j.is_null()) {
        out.reset();
      } else {
        if (!j.is_number()) throw ConfigError(key, "expected a number or null");
        out = j.get<double>();
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(key, "expected true or false");
      out = j.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(key, "expected a string");
      out = j.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError(key, "expected a number");
      out = j.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError(key, "expected an integer");
      if (std::is_unsigned_v<T> && j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
        throw ConfigError(key, "must be non-negative");
      }
      out = j.get<T>();
    } else {
      using Elem = typename T::value_type;
      if (!j.is_array()) throw ConfigError(key, "expected a list");
      T values;
      for (std::size_t i = 0; i < j.size(); ++i) {
        Elem v{};
        decode(key + "[" + std::to_string(i) + "]", j[i], v);
        values.push_back(v);
      }
      out = std::move(values);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

// Reports the first leaf of `given` that has no counterpart in `known`.
void check_known(const json& known, const json& given, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!known.contains(it.key())) throw ConfigError(key, "unknown key");
    const json& k = known.at(it.key());
    if (k.is_object()) {
      if (!it.value().is_object()) throw ConfigError(key, "expected a section");
      check_known(k, it.value(), key);
    } else if (it.value().is_object()) {
      throw ConfigError(key, "expected a value, got a section");
    }
  }
}

void merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (env_kind == EnvKind::Balancer) {
    try {
      env.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("env." + e.key(), std::string(e.what()).substr(e.key().size() + 2));
    }
  }
  try {
    algo.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("algo." + e.key(), std::string(e.what()).substr(e.key().size() + 2));
  }
  if (run.checkpoint_interval < 0) throw ConfigError("run.checkpoint_interval", "must be non-negative");
  if (run.eval_interval < 0) throw ConfigError("run.eval_interval", "must be non-negative");
  if (run.eval_envs < 1) throw ConfigError("run.eval_envs", "must be >= 1");
  if (run.eval_steps < 1) throw ConfigError("run.eval_steps", "must be >= 1");
  if (run.eval_velocities.empty()) throw ConfigError("run.eval_velocities", "must not be empty");
  if (run.workers < 1) throw ConfigError("run.workers", "must be >= 1");
  if (run.run_id.find('/') != std::string::npos) throw ConfigError("run.run_id", "must not contain '/'");
}

std::string ExperimentConfig::resolved_run_id() const {
  if (!run.run_id.empty()) return run.run_id;
  return to_string(algo.risk_mode) + "_seed" + std::to_string(run.seed);
}

json to_json(const ExperimentConfig& config) {
  json tree = json::object();
  visit_fields(config, [&](const char* key, const auto& value) { tree[pointer(key)] = encode(value); });
  return tree;
}

ExperimentConfig from_json(const json& tree) {
  if (!tree.is_object()) throw ConfigError("<root>", "configuration must be an object");
  check_known(to_json(ExperimentConfig{}), tree, "");
  ExperimentConfig config;
  visit_fields(config, [&](const char* key, auto& value) {
    const auto ptr = pointer(key);
    if (tree.contains(ptr)) decode(key, tree.at(ptr), value);
  });
  return config;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like section.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto ptr = pointer(key);
  const json defaults = to_json(ExperimentConfig{});
  if (!defaults.contains(ptr) || defaults.at(ptr).is_object()) throw ConfigError(key, "unknown key");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  tree[ptr] = std::move(value);
}

ExperimentConfig resolve_config_tree(json tree, const std::vector<std::string>& overrides) {
  json base = to_json(ExperimentConfig{});
  check_known(base, tree, "");
  merge(base, tree);
  for (const auto& o : overrides) apply_override(base, o);
  ExperimentConfig config = from_json(base);
  config.validate();
  return config;
}

ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::string>& overrides) {
  json tree = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("--config", "cannot open " + file->string());
    try {
      tree = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config", file->string() + ": " + e.what());
    }
  }
  return resolve_config_tree(std::move(tree), overrides);
}

}  // namespace riskadapt::harness
