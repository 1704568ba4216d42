#include "cvar/model/checkpoint.hpp"

#include <algorithm>
#include <map>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"

namespace cvar::model {
namespace {

constexpr std::uint32_t kMaxDims = 8;
constexpr std::uint64_t kMaxBlockValues = 1ull << 32;

void write_blocks(io::Writer& w, const std::vector<NamedBlock>& blocks) {
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    if (num::shape_numel(b.shape) != b.data.size()) {
      throw ShapeError("checkpoint block '" + b.name + "' data does not match its shape");
    }
    w.str(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) w.u64(e);
    w.f32s(b.data);
  }
}

std::vector<NamedBlock> read_blocks(io::Reader& r) {
  const auto count = r.u32();
  std::vector<NamedBlock> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedBlock b;
    b.name = r.str(256);
    const auto dims = r.u32();
    if (dims > kMaxDims) throw FormatError("checkpoint block '" + b.name + "' has too many dimensions");
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < dims; ++d) {
      b.shape.push_back(r.u64());
      numel *= b.shape.back();
      if (numel > kMaxBlockValues) throw FormatError("checkpoint block '" + b.name + "' is implausibly large");
    }
    b.data = r.f32s(numel);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace

std::vector<NamedBlock> to_blocks(const ParamsF& params) {
  std::vector<NamedBlock> out;
  for (const auto& [name, t] : params.named()) {
    out.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  }
  return out;
}

ParamsF from_blocks(const ModelConfig& config, const std::vector<NamedBlock>& blocks) {
  auto params = ParamsF::init(config);
  std::map<std::string, const NamedBlock*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b;
  for (auto& [name, t] : params.named()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + name + "'");
    if (it->second->shape != t.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + num::shape_str(it->second->shape) +
                        ", model expects " + num::shape_str(t.shape()));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), t.mutable_data().begin());
  }
  if (by_name.size() != params.named().size()) throw FormatError("checkpoint has unexpected parameters");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::Writer w(path);
  w.str(kCheckpointFormat);
  const auto& m = c.config;
  for (int v : {m.frames, m.height, m.width, m.channels, m.temporal_patch, m.patch, m.dim, m.layers, m.heads,
                m.classes_exo, m.classes_ego}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(m.dropout);
  w.u64(m.seed);
  w.u64(c.step);
  w.u64(c.epoch);
  w.str(c.rng_state);
  w.str(c.metadata);
  write_blocks(w, c.params);
  write_blocks(w, c.velocity);
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Reader r(path);
  const auto tag = r.str(64);
  if (tag != kCheckpointFormat) {
    throw FormatError("checkpoint " + path.string() + " has format '" + tag + "', expected '" +
                      kCheckpointFormat + "'");
  }
  Checkpoint c;
  auto& m = c.config;
  for (int* v : {&m.frames, &m.height, &m.width, &m.channels, &m.temporal_patch, &m.patch, &m.dim, &m.layers,
                 &m.heads, &m.classes_exo, &m.classes_ego}) {
    *v = static_cast<int>(r.u32());
  }
  m.dropout = r.f64();
  m.seed = r.u64();
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint " + path.string() + " holds an invalid model config: " + e.what());
  }
  c.step = r.u64();
  c.epoch = r.u64();
  c.rng_state = r.str();
  c.metadata = r.str();
  c.params = read_blocks(r);
  c.velocity = read_blocks(r);
  if (!r.at_end()) throw FormatError("checkpoint " + path.string() + " has trailing bytes");
  return c;
}

}  // namespace cvar::model
