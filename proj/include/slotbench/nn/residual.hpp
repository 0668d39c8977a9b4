#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace slotbench::nn {

inline constexpr double kLeakySlope = 0.01;

struct StackEntry {
  enum class Kind { kBlock, kDownscale, kUpscale };
  Kind kind = Kind::kBlock;
  int channels = 0;  // blocks only

  static StackEntry block(int c) { return {Kind::kBlock, c}; }
  static StackEntry downscale() { return {Kind::kDownscale, 0}; }
  static StackEntry upscale() { return {Kind::kUpscale, 0}; }
};

struct ResidualStackConfig {
  int in_channels = 64;
  std::vector<StackEntry> entries;

  int out_channels() const;
  int downscales() const;
  int upscales() const;
};

/// The final Slot Attention encoder body: blocks of 64 / 64 / 128 / 256 channels
/// with one downscale between the 64- and 128-channel groups (sprites) or an
/// extra one after the fourth block (CLEVR).
ResidualStackConfig residual_encoder_stack(int downscales);

/// Mirror of `encoder`: reversed order, downscales become upscales, starting
/// from the encoder's output width.
ResidualStackConfig mirrored_decoder_stack(const ResidualStackConfig& encoder);

/// x + gate * conv(leaky(conv(x))), gate a learnable scalar initialised to 0.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor branch(const torch::Tensor& x);

  torch::Tensor gate;

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Nearest-neighbour 2x upsampling followed by a 3x3 conv.
class UpscaleImpl : public torch::nn::Module {
 public:
  explicit UpscaleImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Upscale);

/// Sequence of residual blocks with resampling. A block whose width differs
/// from the running width is preceded by a 1x1 projection.
class ResidualStackImpl : public torch::nn::Module {
 public:
  enum class LayerKind { kBlock, kProjection, kDownscale, kUpscale };
  struct Layer {
    LayerKind kind;
    torch::nn::AnyModule module;
  };

  explicit ResidualStackImpl(ResidualStackConfig config);
  torch::Tensor forward(const torch::Tensor& x);

  const std::vector<Layer>& layers() const { return layers_; }
  const ResidualStackConfig& config() const { return config_; }

 private:
  ResidualStackConfig config_;
  std::vector<Layer> layers_;
};
TORCH_MODULE(ResidualStack);

}  // namespace slotbench::nn
