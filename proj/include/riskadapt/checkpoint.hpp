#pragma once

// Binary checkpoint, little-endian throughout:
//
//   magic "RADPPOCK" (8 bytes), u32 format version
//   u32 network count (2), then per network: u32 dim count, u32 dims...
//   per network, per layer: f64 weights (row-major out x in), f64 bias
//   u32 action dim, f64 log_std...
//   optimizer states (actor, log_std, critic): i64 step, f64 lr, beta1,
//     beta2, eps, u64 length, f64 m..., f64 v...
//   i64 iteration, f64 alpha, f64 last_cv
//   u64 byte length + UTF-8 resolved configuration JSON

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "riskadapt/adam.hpp"
#include "riskadapt/mlp.hpp"
#include "riskadapt/policy.hpp"

namespace riskadapt {

inline constexpr char kCheckpointMagic[8] = {'R', 'A', 'D', 'P', 'P', 'O', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GaussianPolicy policy;
  Mlp critic;
  AdamState actor_opt;
  AdamState log_std_opt;
  AdamState critic_opt;
  std::int64_t iteration = 0;
  double alpha = 0.0;
  double last_cv = 0.0;
  std::string config_json;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace riskadapt
