#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvar/model/transformer.hpp"

namespace cvar::model {

inline constexpr const char* kCheckpointFormat = "cvar-ckpt/1";

struct NamedBlock {
  std::string name;
  num::Shape shape;
  std::vector<float> data;
  bool operator==(const NamedBlock&) const = default;
};

// Everything needed to resume training bit-for-bit. `metadata` carries free
// text (the effective training config) and is not interpreted here.
struct Checkpoint {
  ModelConfig config;
  std::vector<NamedBlock> params;
  std::vector<NamedBlock> velocity;  // empty when no optimizer state
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::string metadata;
};

std::vector<NamedBlock> to_blocks(const ParamsF& params);
// Fills freshly initialized parameters of `config` from blocks, matching by
// name and shape. Throws FormatError on any missing or mismatched block.
ParamsF from_blocks(const ModelConfig& config, const std::vector<NamedBlock>& blocks);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cvar::model
