#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "vdmask/maskgen.hpp"
#include "vdmask/vit.hpp"

// Checkpoint container: "VDMK1" magic, a little-endian uint64 header
// length, a JSON header (format version, config, tensor manifest with
// shapes and byte offsets), then the float32 payload in manifest order.
// Manifest byte ranges must tile the payload exactly; save/load round-trips
// are byte-identical.

namespace vdm {

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

Checkpoint load_checkpoint(const std::string& path);

// Model-level wrappers.
void save_vit_checkpoint(const std::string& path, ViTParamsT<float>& params,
                         const ViTConfig& cfg);
std::pair<ViTParamsT<float>, ViTConfig> load_vit_checkpoint(const std::string& path);

void save_gates_checkpoint(const std::string& path, GateStackT<float>& stack,
                           const ViTConfig& cfg);
std::pair<GateStackT<float>, ViTConfig> load_gates_checkpoint(const std::string& path);

}  // namespace vdm
