#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace slotbench::nn {

/// Checkpoint file layout:
///   8 bytes   magic "SLOTCKPT"
///   8 bytes   little-endian header length N
///   N bytes   JSON header: {"architecture": <echo>, "meta": {...},
///             "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}]}
///   payload   raw contiguous tensor bytes, offsets relative to payload start
struct Checkpoint {
  nlohmann::json architecture = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `module`, prefixed with "model/".
void append_module_state(Checkpoint& checkpoint, const torch::nn::Module& module);

/// Copies "model/..." tensors into `module`; names and shapes must match exactly.
void load_module_state(const Checkpoint& checkpoint, torch::nn::Module& module);

}  // namespace slotbench::nn
