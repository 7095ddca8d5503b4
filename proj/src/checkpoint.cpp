#include "riskadapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>

namespace riskadapt {

namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }

  template <typename U>
  void uint(U value) {
    for (std::size_t k = 0; k < sizeof(U); ++k) out_.push_back(static_cast<char>((value >> (8 * k)) & 0xff));
  }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> values) {
    for (double v : values) f64(v);
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    need(n);
    std::memcpy(data, in_.data() + pos_, n);
    pos_ += n;
  }

  template <typename U>
  U uint() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) {
      value |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + k])) << (8 * k);
    }
    pos_ += sizeof(U);
    return value;
  }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  void f64s(std::span<double> values) {
    for (double& v : values) v = f64();
  }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint truncated");
  }

  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_adam(Writer& w, const AdamState& s) {
  w.i64(s.step);
  w.f64(s.lr);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.eps);
  w.u64(s.m.size());
  w.f64s(s.m);
  w.f64s(s.v);
}

AdamState read_adam(Reader& r, std::size_t expected) {
  AdamState s;
  s.step = r.i64();
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.eps = r.f64();
  const auto n = r.u64();
  if (n != expected) throw CheckpointError("optimizer state size does not match its network");
  s.m.resize(n);
  s.v.resize(n);
  r.f64s(s.m);
  r.f64s(s.v);
  return s;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.u32(2);
  for (const Mlp* net : {&c.policy.mean_net, &c.critic}) {
    w.u32(static_cast<std::uint32_t>(net->layer_dims().size()));
    for (auto d : net->layer_dims()) w.u32(static_cast<std::uint32_t>(d));
  }
  // The flat parameter buffer is already per-layer weights then bias.
  w.f64s(c.policy.mean_net.params());
  w.f64s(c.critic.params());
  w.u32(static_cast<std::uint32_t>(c.policy.log_std.size()));
  w.f64s(c.policy.log_std);
  write_adam(w, c.actor_opt);
  write_adam(w, c.log_std_opt);
  write_adam(w, c.critic_opt);
  w.i64(c.iteration);
  w.f64(c.alpha);
  w.f64(c.last_cv);
  w.u64(c.config_json.size());
  w.bytes(c.config_json.data(), c.config_json.size());
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof(kCheckpointMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw CheckpointError("not a riskadapt checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (r.u32() != 2) throw CheckpointError("expected two networks");
  std::vector<std::size_t> dims[2];
  for (auto& d : dims) {
    const auto count = r.u32();
    if (count < 2 || count > 64) throw CheckpointError("implausible layer count");
    for (std::uint32_t k = 0; k < count; ++k) d.push_back(r.u32());
  }
  Checkpoint c;
  try {
    c.policy.mean_net = Mlp(dims[0]);
    c.critic = Mlp(dims[1]);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad layer dimensions: ") + e.what());
  }
  r.f64s(c.policy.mean_net.params());
  r.f64s(c.critic.params());
  const auto act_dim = r.u32();
  if (act_dim != c.policy.mean_net.output_dim()) throw CheckpointError("log_std size does not match the actor");
  c.policy.log_std.resize(act_dim);
  r.f64s(c.policy.log_std);
  c.actor_opt = read_adam(r, c.policy.mean_net.num_params());
  c.log_std_opt = read_adam(r, act_dim);
  c.critic_opt = read_adam(r, c.critic.num_params());
  c.iteration = r.i64();
  c.alpha = r.f64();
  c.last_cv = r.f64();
  const auto json_len = r.u64();
  if (json_len != r.remaining()) throw CheckpointError("trailing configuration length mismatch");
  c.config_json.resize(json_len);
  r.bytes(c.config_json.data(), json_len);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace riskadapt
