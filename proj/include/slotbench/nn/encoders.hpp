#pragma once

#include <torch/torch.h>

#include "slotbench/nn/broadcast.hpp"
#include "slotbench/nn/residual.hpp"

namespace slotbench::nn {

/// Same-resolution conv stack of the original Slot Attention encoder.
struct ConvEncoderConfig {
  int in_channels = 3;
  int channels = 64;
  int layers = 4;
  int kernel_size = 5;
  bool position_embedding = true;
  int height = 64;
  int width = 64;
};

class ConvEncoderImpl : public torch::nn::Module {
 public:
  explicit ConvEncoderImpl(ConvEncoderConfig config);
  /// [B, 3, H, W] -> [B, C, H, W]; ReLU after every conv, position embedding last.
  torch::Tensor forward(const torch::Tensor& image);

  const ConvEncoderConfig& config() const { return config_; }
  SoftPositionEmbedding position() { return position_; }

 private:
  ConvEncoderConfig config_;
  torch::nn::Sequential convs_{nullptr};
  SoftPositionEmbedding position_{nullptr};
};
TORCH_MODULE(ConvEncoder);

/// Input conv to the stack width, residual stack, position embedding.
class ResidualEncoderImpl : public torch::nn::Module {
 public:
  ResidualEncoderImpl(int in_channels, ResidualStackConfig stack, int height, int width);
  torch::Tensor forward(const torch::Tensor& image);

  int out_channels() const { return stack_->config().out_channels(); }
  int out_height() const { return out_height_; }
  int out_width() const { return out_width_; }
  ResidualStack stack() { return stack_; }

 private:
  torch::nn::Conv2d input_{nullptr};
  ResidualStack stack_{nullptr};
  SoftPositionEmbedding position_{nullptr};
  int out_height_;
  int out_width_;
};
TORCH_MODULE(ResidualEncoder);

/// Spatial-broadcast decoder of the original Slot Attention / MONet component VAE:
/// broadcast at full resolution, `layers` same-size convs, 3x3 output conv.
struct BroadcastDecoderConfig {
  int latent_size = 64;
  int channels = 64;
  int layers = 4;
  int kernel_size = 5;
  int out_channels = 4;
  int height = 64;
  int width = 64;
};

class BroadcastDecoderImpl : public torch::nn::Module {
 public:
  explicit BroadcastDecoderImpl(BroadcastDecoderConfig config);
  /// [N, D] -> [N, out_channels, H, W]
  torch::Tensor forward(const torch::Tensor& latents);
  const BroadcastDecoderConfig& config() const { return config_; }
  int input_channels() const { return config_.latent_size + 2; }

 private:
  BroadcastDecoderConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(BroadcastDecoder);

/// Residual decoder: broadcast at `broadcast_size`, input conv to the stack
/// width, mirrored residual stack (upscaling back to image size), output conv.
class ResidualDecoderImpl : public torch::nn::Module {
 public:
  ResidualDecoderImpl(int latent_size, ResidualStackConfig stack, int broadcast_size, int out_channels, int height,
                      int width);
  torch::Tensor forward(const torch::Tensor& latents);

 private:
  int broadcast_size_;
  torch::nn::Conv2d input_{nullptr};
  ResidualStack stack_{nullptr};
  torch::nn::Conv2d output_{nullptr};
};
TORCH_MODULE(ResidualDecoder);

}  // namespace slotbench::nn
