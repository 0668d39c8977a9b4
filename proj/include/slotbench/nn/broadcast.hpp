#pragma once

#include <torch/torch.h>

namespace slotbench::nn {

struct SpatialBroadcastConfig {
  int latent_size = 64;
  int height = 64;
  int width = 64;

  int decoder_input_channels() const { return latent_size + 2; }
};

/// Tiles [B, D] latents over an H x W grid and appends two coordinate channels:
/// channel D is the x ramp (-1 at column 0, +1 at column W-1), channel D+1 the y ramp.
torch::Tensor spatial_broadcast(const torch::Tensor& latents, int height, int width);

/// Same, checking D against the configured latent size.
torch::Tensor spatial_broadcast(const torch::Tensor& latents, const SpatialBroadcastConfig& config);

/// Coordinate grid [1, 2, H, W] used by the broadcast.
torch::Tensor coordinate_channels(int height, int width, const torch::TensorOptions& options);

/// Learned projection of the 4-channel grid (x, y, 1-x, 1-y in [0, 1]) added to
/// a feature map; the position embedding of the Slot Attention encoders.
class SoftPositionEmbeddingImpl : public torch::nn::Module {
 public:
  SoftPositionEmbeddingImpl(int channels, int height, int width);

  torch::Tensor forward(const torch::Tensor& features);
  /// The additive term alone, [1, C, H, W].
  torch::Tensor embedding();

 private:
  torch::nn::Linear projection_{nullptr};
  torch::Tensor grid_;
};
TORCH_MODULE(SoftPositionEmbedding);

}  // namespace slotbench::nn
