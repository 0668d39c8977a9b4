#pragma once

#include <cstdint>
#include <span>

#include <torch/torch.h>

#include "slotbench/data/scene.hpp"

namespace slotbench::eval {

/// Per-pixel argmax over slots, ties to the lowest slot index.
/// [K, H, W] -> [H, W] int64, or [B, K, H, W] -> [B, H, W].
torch::Tensor masks_to_labels(const torch::Tensor& masks);

/// Adjusted Rand Index restricted to pixels whose true label is > 0.
/// 1.0 for identical foreground partitions (up to relabelling); 0.0 when the
/// foreground has fewer than 2 pixels or the expected-index denominator is 0.
double ari_foreground(std::span<const std::int64_t> truth, std::span<const std::int64_t> pred);
double ari_foreground(const torch::Tensor& truth, const torch::Tensor& pred);
double ari_foreground(const data::LabelMap& truth, const torch::Tensor& pred);

/// Mean over channels and pixels of the squared difference.
double mse(const torch::Tensor& image, const torch::Tensor& reconstruction);

/// Ground-truth label map as an int64 [H, W] tensor.
torch::Tensor label_tensor(const data::LabelMap& labels);

}  // namespace slotbench::eval
