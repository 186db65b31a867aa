// SPDX-License-Identifier: Apache-2.0
#include "unlearn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unlearn/config.hpp"

namespace unlearn {

namespace {

constexpr char kMagic[8] = {'U', 'L', 'C', 'K', 'P', 'T', '\0', '\0'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, std::string_view s) {
  put_u64(out, s.size());
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint: truncated data");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint64_t> to_words(std::span<const double> values) {
  std::vector<std::uint64_t> w(values.size());
  std::transform(values.begin(), values.end(), w.begin(), [](double d) { return std::bit_cast<std::uint64_t>(d); });
  return w;
}

void add_adam(CheckpointFile& f, const std::string& prefix, const AdamState& s) {
  const double cfg[4] = {s.config.lr, s.config.beta1, s.config.beta2, s.config.eps};
  f.add_doubles(prefix + ".config", cfg);
  f.add_doubles(prefix + ".m", s.m);
  f.add_doubles(prefix + ".v", s.v);
  f.add(prefix + ".counts", s.counts);
  f.add(prefix + ".step", {s.step});
}

AdamState read_adam(const CheckpointFile& f, const std::string& prefix, std::size_t n) {
  const std::vector<double> cfg = f.doubles(prefix + ".config");
  if (cfg.size() != 4) throw CheckpointError("checkpoint: malformed " + prefix + ".config");
  AdamState s;
  s.config = AdamConfig{cfg[0], cfg[1], cfg[2], cfg[3]};
  s.m = f.doubles(prefix + ".m");
  s.v = f.doubles(prefix + ".v");
  s.counts = f.blob(prefix + ".counts").words;
  const auto& step = f.blob(prefix + ".step").words;
  if (s.m.size() != n || s.v.size() != n || s.counts.size() != n || step.size() != 1) {
    throw CheckpointError("checkpoint: " + prefix + " does not match the parameter count");
  }
  s.step = step[0];
  return s;
}

ModelHandle read_model(const CheckpointFile& f, const std::string& name, const NetworkSpec& spec, ModelRole role) {
  const std::vector<double> values = f.doubles(name + ".params");
  ModelHandle m{spec, make_layout(spec), role};
  if (values.size() != m.params.size()) {
    throw CheckpointError("checkpoint: " + name + " has " + std::to_string(values.size()) +
                          " parameters, network config implies " + std::to_string(m.params.size()));
  }
  std::copy(values.begin(), values.end(), m.params.values().begin());
  return m;
}

}  // namespace

bool CheckpointFile::has(std::string_view name) const {
  return std::any_of(blobs.begin(), blobs.end(), [&](const Blob& b) { return b.name == name; });
}

const Blob& CheckpointFile::blob(std::string_view name) const {
  for (const Blob& b : blobs) {
    if (b.name == name) return b;
  }
  throw CheckpointError("checkpoint: missing blob '" + std::string(name) + "'");
}

void CheckpointFile::add(std::string name, std::vector<std::uint64_t> words) {
  if (has(name)) throw CheckpointError("checkpoint: duplicate blob '" + name + "'");
  blobs.push_back(Blob{std::move(name), std::move(words)});
}

void CheckpointFile::add_doubles(std::string name, std::span<const double> values) {
  add(std::move(name), to_words(values));
}

std::vector<double> CheckpointFile::doubles(std::string_view name) const {
  const auto& w = blob(name).words;
  std::vector<double> out(w.size());
  std::transform(w.begin(), w.end(), out.begin(), [](std::uint64_t u) { return std::bit_cast<double>(u); });
  return out;
}

std::string encode_checkpoint(const CheckpointFile& file) {
  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, file.version);
  put_string(out, file.kind);
  put_string(out, file.config_text);
  put_u64(out, file.blobs.size());
  for (const Blob& b : file.blobs) {
    put_string(out, b.name);
    put_u64(out, b.words.size());
    for (std::uint64_t w : b.words) put_u64(out, w);
  }
  put_u64(out, fnv1a(out));
  return out;
}

CheckpointFile decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: not a checkpoint file (bad magic)");
  }
  Reader r(bytes);
  r.raw(sizeof(kMagic));
  CheckpointFile f;
  f.version = r.u64();
  if (f.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(f.version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a(body)) throw CheckpointError("checkpoint: checksum mismatch (file is corrupt)");

  Reader b(body);
  b.raw(sizeof(kMagic) + 8);
  f.kind = b.str();
  f.config_text = b.str();
  const std::uint64_t count = b.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    Blob blob;
    blob.name = b.str();
    const std::uint64_t n = b.u64();
    if (n > b.remaining() / 8) throw CheckpointError("checkpoint: truncated data");
    blob.words.resize(n);
    for (auto& w : blob.words) w = b.u64();
    f.blobs.push_back(std::move(blob));
  }
  if (b.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes after last blob");
  return f;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  const std::string bytes = encode_checkpoint(file);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(std::string(e.what()) + ": " + path.string());
  }
}

RunConfig checkpoint_config(const CheckpointFile& file) {
  try {
    return parse_config(file.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad config echo: ") + e.what());
  }
}

CheckpointFile model_checkpoint(const ModelHandle& model, const RunConfig& config, std::string kind) {
  if (!(model.spec == config.network())) throw CheckpointError("checkpoint: model does not match the net config");
  CheckpointFile f;
  f.kind = std::move(kind);
  f.config_text = serialize_config(config);
  f.add_doubles("model.params", model.params.values());
  f.add("model.role", {static_cast<std::uint64_t>(model.role)});
  return f;
}

ModelHandle model_from_checkpoint(const CheckpointFile& file, RunConfig* config_out) {
  const RunConfig config = checkpoint_config(file);
  const auto& role = file.blob("model.role").words;
  if (role.size() != 1 || role[0] > static_cast<std::uint64_t>(ModelRole::Generator)) {
    throw CheckpointError("checkpoint: malformed model.role");
  }
  ModelHandle m = read_model(file, "model", config.network(), static_cast<ModelRole>(role[0]));
  if (config_out) *config_out = config;
  return m;
}

CheckpointFile state_checkpoint(const TrainState& state, const RunConfig& config) {
  CheckpointFile f;
  f.kind = "unlearn";
  f.config_text = serialize_config(config);
  f.add("counters", {state.iteration, state.images_seen});
  f.add_doubles("theta.params", state.theta.params.values());
  f.add_doubles("psi.params", state.psi.params.values());
  f.add_doubles("phi.params", state.phi.params.values());
  add_adam(f, "opt_psi", state.opt_psi);
  add_adam(f, "opt_theta_retain", state.opt_theta_retain);
  add_adam(f, "opt_theta_forget", state.opt_theta_forget);
  const SaliencyMask& m = state.mask;
  f.add("mask.bits", std::vector<std::uint64_t>(m.bits.begin(), m.bits.end()));
  f.add("mask.kind", {static_cast<std::uint64_t>(m.policy.kind), m.degenerate ? 1u : 0u});
  const double meta[4] = {m.policy.gamma, m.policy.q, m.threshold, m.density};
  f.add_doubles("mask.meta", meta);
  f.add("rng", state.rng.state());
  return f;
}

TrainState state_from_checkpoint(const CheckpointFile& file, RunConfig* config_out) {
  if (file.kind != "unlearn") throw CheckpointError("checkpoint: expected an unlearning state, found '" + file.kind + "'");
  const RunConfig config = checkpoint_config(file);
  const NetworkSpec spec = config.network();
  // Everything is decoded into a local before anything is handed back.
  TrainState s;
  const auto& counters = file.blob("counters").words;
  if (counters.size() != 2) throw CheckpointError("checkpoint: malformed counters");
  s.iteration = counters[0];
  s.images_seen = counters[1];
  s.theta = read_model(file, "theta", spec, ModelRole::Generator);
  s.psi = read_model(file, "psi", spec, ModelRole::FakeScore);
  s.phi = read_model(file, "phi", spec, ModelRole::Teacher);
  const std::size_t p = s.theta.params.size();
  s.opt_psi = read_adam(file, "opt_psi", p);
  s.opt_theta_retain = read_adam(file, "opt_theta_retain", p);
  s.opt_theta_forget = read_adam(file, "opt_theta_forget", p);

  const auto& bits = file.blob("mask.bits").words;
  if (!bits.empty() && bits.size() != p) throw CheckpointError("checkpoint: mask does not match the parameter count");
  for (std::uint64_t b : bits) {
    if (b > 1) throw CheckpointError("checkpoint: mask bits must be 0 or 1");
    s.mask.bits.push_back(static_cast<std::uint8_t>(b));
  }
  const auto& kind = file.blob("mask.kind").words;
  const std::vector<double> meta = file.doubles("mask.meta");
  if (kind.size() != 2 || kind[0] > 1 || meta.size() != 4) throw CheckpointError("checkpoint: malformed mask metadata");
  s.mask.policy = MaskPolicy{static_cast<MaskPolicyKind>(kind[0]), meta[0], meta[1]};
  s.mask.degenerate = kind[1] != 0;
  s.mask.threshold = meta[2];
  s.mask.density = meta[3];
  try {
    s.rng.set_state(file.blob("rng").words);
  } catch (const std::invalid_argument&) {
    throw CheckpointError("checkpoint: malformed rng state");
  }
  if (config_out) *config_out = config;
  return s;
}

}  // namespace unlearn
