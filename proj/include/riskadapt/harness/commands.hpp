#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace riskadapt::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::optional<std::string> velocities;  ///< comma list
  std::optional<std::uint64_t> seed;      ///< evaluation seed
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

struct DisturbOptions {
  std::filesystem::path checkpoint;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<double> interval;
  std::optional<double> duration;
  std::optional<std::string> magnitudes;  ///< comma list
  bool no_push = false;
  int steps = 1000;
  std::size_t envs = 64;
  double velocity = 0.0;
};

struct SweepOptions {
  CommonOptions common;
  std::string modes = "adaptive,fixed_neutral,fixed_averse,fixed_seeking,scalar_ppo";
  std::string seeds = "0,1,2";
};

struct PlotOptions {
  std::string kind;  ///< learning-curves | velocity-sweep | cv-trace
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out;
  std::optional<std::string> metric;
};

// Each returns a process exit code; diagnostics go to `err`.
int cmd_train(const CommonOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_disturb(const DisturbOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepOptions& options, std::ostream& out, std::ostream& err);
int cmd_plot(const PlotOptions& options, std::ostream& out, std::ostream& err);

std::vector<double> parse_double_list(const std::string& text, const std::string& what);

}  // namespace riskadapt::harness
