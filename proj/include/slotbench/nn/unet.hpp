#pragma once

#include <vector>

#include <torch/torch.h>

namespace slotbench::nn {

struct UNetConfig {
  int depth = 5;
  std::vector<int> channels{32, 64, 128, 128, 128};
  /// s active skips keep the s innermost (lowest-resolution) paths.
  int num_skip_connections = 5;
  int in_channels = 4;
  int out_channels = 1;
  int bottleneck_width = 128;

  void validate() const;
  /// Level 0 is the full-resolution level, depth - 1 the innermost.
  bool skip_active(int level) const { return level >= depth - num_skip_connections; }
};

/// U-Net with conv / instance-norm / ReLU blocks, 2x max-pool downsampling,
/// nearest upsampling and an MLP bottleneck over the innermost feature map.
/// The MLP size depends on the input resolution, which is fixed at construction.
class UNetImpl : public torch::nn::Module {
 public:
  UNetImpl(UNetConfig config, int height, int width);

  /// [B, in_channels, H, W] -> [B, out_channels, H, W] logits.
  torch::Tensor forward(const torch::Tensor& x);

  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  int height_;
  int width_;
  int bottom_h_;
  int bottom_w_;
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
  torch::nn::Sequential bottleneck_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

}  // namespace slotbench::nn
