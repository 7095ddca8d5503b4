#include "riskadapt/harness/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>

#include <fmt/format.h>

#include "riskadapt/checkpoint.hpp"
#include "riskadapt/errors.hpp"
#include "riskadapt/harness/csv.hpp"
#include "riskadapt/harness/run.hpp"
#include "riskadapt/harness/svg.hpp"

namespace riskadapt::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CsvError& e) {
    err << "malformed csv: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

std::vector<std::string> with_common(const CommonOptions& o) {
  auto overrides = o.overrides;
  if (o.seed) overrides.push_back("run.seed=" + std::to_string(*o.seed));
  if (o.out) overrides.push_back("run.out=" + json(*o.out).dump());
  return overrides;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path output_dir(const std::optional<std::string>& out, const fs::path& checkpoint, const char* leaf) {
  if (out) return *out;
  const auto parent = checkpoint.parent_path();
  return (parent.empty() ? fs::path(".") : parent) / leaf;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  for (const auto& item : split_list(text)) {
    double v = 0.0;
    const auto* end = item.data() + item.size();
    auto [ptr, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
      throw ConfigError(what, "not a number: '" + item + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError(what, "empty list");
  return values;
}

int cmd_train(const CommonOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = resolve_config(options.config, with_common(options));
    const auto result = train_run(config, &out);
    out << "run directory: " << result.run_dir.string() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto overrides = options.overrides;
    if (options.velocities) {
      json list = parse_double_list(*options.velocities, "--velocities");
      overrides.push_back("run.eval_velocities=" + list.dump());
    }
    if (options.seed) overrides.push_back("run.eval_seed=" + std::to_string(*options.seed));
    const auto run = load_run(options.checkpoint, overrides);
    const auto rows = evaluate_policy(run.checkpoint.policy, run.checkpoint.critic, run.config);
    const fs::path dir = output_dir(options.out, options.checkpoint, "eval");
    fs::create_directories(dir);
    write_metrics(dir, rows);
    for (const auto& r : rows) {
      out << fmt::format("{:>10}  ood={}  success={:.3f}  x_rmse={:.4f}  return={:.2f}  cv={:.4f}\n",
                         r.target_velocity ? fmt::format("{:+.2f}", *r.target_velocity) : "aggregate",
                         r.ood ? 1 : 0, r.success_rate, r.x_rmse, r.mean_return, r.mean_cv);
    }
    out << "metrics written to " << dir.string() << "\n";
    return kExitOk;
  });
}

int cmd_disturb(const DisturbOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto run = load_run(options.checkpoint, options.overrides);
    const auto& config = run.config;
    if (config.env_kind != EnvKind::Balancer) throw ConfigError("env.kind", "disturb needs the balancer");
    if (options.steps < 1) throw ConfigError("--steps", "must be >= 1");
    if (options.envs < 1) throw ConfigError("--envs", "must be >= 1");

    DisturbProtocol protocol;
    protocol.schedule = config.env.disturbance;
    if (options.interval) protocol.schedule.interval = *options.interval;
    if (options.duration) protocol.schedule.duration = *options.duration;
    if (options.magnitudes) protocol.schedule.magnitudes = parse_double_list(*options.magnitudes, "--magnitudes");
    protocol.schedule.enabled = !options.no_push;
    {
      BalancerConfig check = config.env;
      check.disturbance = protocol.schedule;
      try {
        check.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("--push-" + e.key().substr(e.key().find('.') + 1), e.what());
      }
    }
    protocol.velocity = options.velocity;
    protocol.n_envs = options.envs;
    protocol.episode_steps = options.steps;
    protocol.seed = options.seed.value_or(config.run.eval_seed);

    const DisturbResult result =
        evaluate_disturbance(mean_action_controller(run.checkpoint.policy), run.checkpoint.critic, config.env, protocol);

    const fs::path dir = output_dir(options.out, options.checkpoint, "disturb");
    fs::create_directories(dir);
    {
      CsvWriter trace(dir / "cv_trace.csv", {"t", "mean_cv", "velocity_deviation", "push_active"});
      for (const auto& s : result.with_force.trace) {
        trace.row({format_double(s.time), format_double(s.mean_cv), format_double(s.velocity_deviation),
                   s.push_active ? "1" : "0"});
      }
    }
    const auto responses = push_responses(result.with_force.trace);
    std::size_t cv_up = 0;
    {
      CsvWriter csv(dir / "push_response.csv",
                    {"onset", "pre_cv", "post_cv", "pre_velocity_deviation", "post_velocity_deviation"});
      for (const auto& r : responses) {
        csv.row({format_double(r.onset), format_double(r.pre_cv), format_double(r.post_cv),
                 format_double(r.pre_deviation), format_double(r.post_deviation)});
        cv_up += r.post_cv > r.pre_cv ? 1 : 0;
      }
    }

    auto record = [&](const EpisodeSummary& s, const std::string& suffix, double drop) {
      MetricsRecord r;
      r.run_id = config.resolved_run_id() + suffix;
      r.risk_mode = to_string(config.algo.risk_mode);
      r.seed = config.run.seed;
      r.target_velocity = protocol.velocity;
      r.ood = is_ood(config.env, protocol.velocity);
      r.success_rate = s.success_rate;
      r.x_rmse = s.x_rmse;
      r.mean_return = s.mean_return;
      r.mean_cv = s.mean_cv;
      r.success_drop = drop;
      return r;
    };
    write_metrics(dir, {record(result.with_force, "", result.success_drop),
                        record(result.without_force, "_nopush", std::nan(""))});

    json summary;
    summary["pushes_enabled"] = protocol.schedule.enabled;
    summary["success_with_force"] = result.with_force.success_rate;
    summary["success_without_force"] = result.without_force.success_rate;
    summary["success_drop_percent"] =
        std::isfinite(result.success_drop) ? json(100.0 * result.success_drop) : json(nullptr);
    summary["pushes_evaluated"] = responses.size();
    summary["pushes_with_cv_increase"] = cv_up;
    write_text(dir / "disturb.json", summary.dump(2) + "\n");

    out << fmt::format("success with force {:.3f}, without {:.3f}, drop {:.1f}%\n", result.with_force.success_rate,
                       result.without_force.success_rate, 100.0 * result.success_drop);
    out << fmt::format("CV rose after {}/{} pushes\n", cv_up, responses.size());
    out << "trace written to " << (dir / "cv_trace.csv").string() << "\n";
    return kExitOk;
  });
}

int cmd_sweep(const SweepOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto common = options.common;
    const std::optional<std::string> root_override = common.out;
    common.out.reset();
    const auto base = resolve_config(common.config, with_common(common));
    std::vector<RiskMode> modes;
    for (const auto& m : split_list(options.modes)) {
      try {
        modes.push_back(parse_risk_mode(m));
      } catch (const std::exception& e) {
        throw ConfigError("--modes", e.what());
      }
    }
    if (modes.empty()) throw ConfigError("--modes", "empty list");
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(options.seeds)) {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("--seeds", "not an integer: '" + s + "'");
      seeds.push_back(v);
    }
    if (seeds.empty()) throw ConfigError("--seeds", "empty list");
    const fs::path root = root_override ? fs::path(*root_override) : default_output_root() / "sweep";
    const auto cells = run_sweep(base, modes, seeds, root, &out);
    const auto failed = std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return !c.ok; });
    out << fmt::format("{} cells, {} failed; summary in {}\n", cells.size(), failed, (root / "sweep.csv").string());
    return kExitOk;
  });
}

namespace {

std::string plot_learning_curves(const std::vector<fs::path>& inputs, const std::string& metric) {
  LinePlot plot;
  plot.title = "Learning curves: " + metric;
  plot.x_label = "iteration";
  plot.y_label = metric;
  for (const auto& path : inputs) {
    const CsvTable t = read_csv(path);
    if (t.has_column("metric")) {
      const auto mc = t.column("mode"), ic = t.column("iteration"), kc = t.column("metric");
      const auto vc = t.column("mean"), ec = t.column("stderr");
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r][kc] != metric) continue;
        const std::string& mode = t.rows[r][mc];
        auto it = std::find_if(plot.series.begin(), plot.series.end(), [&](const Series& s) { return s.label == mode; });
        if (it == plot.series.end()) {
          plot.series.push_back({mode, {}, {}, {}});
          it = plot.series.end() - 1;
        }
        it->x.push_back(t.number(r, ic));
        it->y.push_back(t.number(r, vc));
        it->err.push_back(t.number(r, ec));
      }
    } else {
      const auto ic = t.column("iteration"), vc = t.column(metric);
      Series s;
      s.label = path.parent_path().filename().string();
      if (s.label.empty()) s.label = path.filename().string();
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        s.x.push_back(t.number(r, ic));
        s.y.push_back(t.number(r, vc));
      }
      plot.series.push_back(std::move(s));
    }
  }
  return render_line_plot(plot);
}

std::string plot_velocity_sweep(const std::vector<fs::path>& inputs, const std::string& metric) {
  BarPlot plot;
  plot.title = "Evaluation by target velocity: " + metric;
  plot.y_label = metric;
  std::vector<std::string> velocity_labels;
  std::vector<std::vector<double>> per_file;
  for (const auto& path : inputs) {
    const CsvTable t = read_csv(path);
    const auto vc = t.column("target_velocity"), mc = t.column(metric), rc = t.column("run_id");
    std::string label = t.rows.empty() ? path.filename().string() : t.rows.front()[rc];
    plot.series_labels.push_back(label);
    std::vector<std::pair<std::string, double>> values;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string& v = t.rows[r][vc];
      if (v != "aggregate") t.number(r, vc);  // reject garbage velocities
      values.emplace_back(v, t.number(r, mc));
      if (std::find(velocity_labels.begin(), velocity_labels.end(), v) == velocity_labels.end())
        velocity_labels.push_back(v);
    }
    per_file.emplace_back();
    for (const auto& label_v : velocity_labels) {
      double x = std::nan("");
      for (const auto& [v, val] : values)
        if (v == label_v) x = val;
      per_file.back().push_back(x);
    }
  }
  for (std::size_t g = 0; g < velocity_labels.size(); ++g) {
    BarGroup group;
    group.label = velocity_labels[g];
    for (const auto& f : per_file) group.values.push_back(g < f.size() ? f[g] : std::nan(""));
    plot.groups.push_back(std::move(group));
  }
  return render_bar_plot(plot);
}

std::string plot_cv_trace(const std::vector<fs::path>& inputs, const std::string& metric) {
  LinePlot plot;
  plot.title = "Critic uncertainty under pushes";
  plot.x_label = "time (s)";
  plot.y_label = metric;
  for (const auto& path : inputs) {
    const CsvTable t = read_csv(path);
    const auto tc = t.column("t"), vc = t.column(metric), pc = t.column("push_active");
    Series s;
    s.label = path.parent_path().filename().string();
    if (s.label.empty()) s.label = path.filename().string();
    bool in_push = false;
    double start = 0.0, prev_t = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const double time = t.number(r, tc);
      const double flag = t.number(r, pc);
      s.x.push_back(time);
      s.y.push_back(t.number(r, vc));
      if (flag != 0.0 && !in_push) {
        in_push = true;
        start = time;
      }
      if (flag == 0.0 && in_push) {
        plot.shaded.push_back({start, time});
        in_push = false;
      }
      prev_t = time;
    }
    if (in_push) plot.shaded.push_back({start, prev_t});
    plot.series.push_back(std::move(s));
  }
  return render_line_plot(plot);
}

}  // namespace

int cmd_plot(const PlotOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::string svg;
    if (options.kind == "learning-curves") {
      svg = plot_learning_curves(options.inputs, options.metric.value_or("total_reward"));
    } else if (options.kind == "velocity-sweep") {
      svg = plot_velocity_sweep(options.inputs, options.metric.value_or("success_rate"));
    } else if (options.kind == "cv-trace") {
      svg = plot_cv_trace(options.inputs, options.metric.value_or("mean_cv"));
    } else {
      throw ConfigError("--kind", "expected learning-curves, velocity-sweep or cv-trace");
    }
    if (options.out.has_parent_path()) fs::create_directories(options.out.parent_path());
    write_text(options.out, svg);
    out << "wrote " << options.out.string() << "\n";
    return kExitOk;
  });
}

}  // namespace riskadapt::harness
