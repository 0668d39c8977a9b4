#include "slotbench/nn/broadcast.hpp"

#include <string>

#include "slotbench/errors.hpp"

namespace slotbench::nn {

torch::Tensor coordinate_channels(int height, int width, const torch::TensorOptions& options) {
  auto xs = torch::linspace(-1.0, 1.0, width, options);
  auto ys = torch::linspace(-1.0, 1.0, height, options);
  auto x_ramp = xs.view({1, 1, 1, width}).expand({1, 1, height, width});
  auto y_ramp = ys.view({1, 1, height, 1}).expand({1, 1, height, width});
  return torch::cat({x_ramp, y_ramp}, 1);
}

torch::Tensor spatial_broadcast(const torch::Tensor& latents, int height, int width) {
  if (latents.dim() != 2) throw ShapeError("spatial_broadcast expects [B, D] latents");
  const auto batch = latents.size(0);
  const auto d = latents.size(1);
  auto tiled = latents.view({batch, d, 1, 1}).expand({batch, d, height, width});
  auto coords = coordinate_channels(height, width, latents.options()).expand({batch, 2, height, width});
  return torch::cat({tiled, coords}, 1);
}

torch::Tensor spatial_broadcast(const torch::Tensor& latents, const SpatialBroadcastConfig& config) {
  if (latents.dim() != 2 || latents.size(1) != config.latent_size) {
    throw ShapeError("spatial_broadcast configured for latent size " + std::to_string(config.latent_size));
  }
  return spatial_broadcast(latents, config.height, config.width);
}

SoftPositionEmbeddingImpl::SoftPositionEmbeddingImpl(int channels, int height, int width) {
  projection_ = register_module("projection", torch::nn::Linear(4, channels));
  auto xs = torch::linspace(0.0, 1.0, width).view({1, width}).expand({height, width});
  auto ys = torch::linspace(0.0, 1.0, height).view({height, 1}).expand({height, width});
  grid_ = register_buffer("grid", torch::stack({xs, ys, 1.0 - xs, 1.0 - ys}, -1).contiguous());
}

torch::Tensor SoftPositionEmbeddingImpl::embedding() {
  // [H, W, 4] -> [H, W, C] -> [1, C, H, W]
  return projection_->forward(grid_).permute({2, 0, 1}).unsqueeze(0);
}

torch::Tensor SoftPositionEmbeddingImpl::forward(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(2) != grid_.size(0) || features.size(3) != grid_.size(1)) {
    throw ShapeError("position embedding resolution does not match the feature map");
  }
  return features + embedding();
}

}  // namespace slotbench::nn
