#include "slotbench/nn/unet.hpp"

#include <string>

#include "slotbench/errors.hpp"

namespace slotbench::nn {

void UNetConfig::validate() const {
  if (depth < 1) throw ConfigError("U-Net depth must be >= 1");
  if (static_cast<int>(channels.size()) != depth) {
    throw ConfigError("U-Net needs one channel width per level (depth " + std::to_string(depth) + ", got " +
                      std::to_string(channels.size()) + ")");
  }
  if (num_skip_connections < 0 || num_skip_connections > depth) {
    throw ConfigError("U-Net skip connections must lie in [0, depth]");
  }
  if (in_channels < 1 || out_channels < 1 || bottleneck_width < 1) throw ConfigError("U-Net widths must be positive");
}

namespace {

torch::nn::Sequential conv_block(int in, int out) {
  // No conv bias: instance norm would cancel it and leave it without gradient.
  return torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1).bias(false)),
                               torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)),
                               torch::nn::ReLU());
}

}  // namespace

UNetImpl::UNetImpl(UNetConfig config, int height, int width)
    : config_(std::move(config)), height_(height), width_(width) {
  config_.validate();
  const int factor = 1 << config_.depth;
  if (height % factor != 0 || width % factor != 0) {
    throw ShapeError("U-Net of depth " + std::to_string(config_.depth) + " needs H and W divisible by " +
                     std::to_string(factor) + ", got " + std::to_string(height) + "x" + std::to_string(width));
  }
  bottom_h_ = height / factor;
  bottom_w_ = width / factor;

  int in = config_.in_channels;
  for (int l = 0; l < config_.depth; ++l) {
    down_.push_back(register_module("down" + std::to_string(l), conv_block(in, config_.channels[l])));
    in = config_.channels[l];
  }
  const int flat = in * bottom_h_ * bottom_w_;
  bottleneck_ = register_module(
      "bottleneck",
      torch::nn::Sequential(torch::nn::Linear(flat, config_.bottleneck_width), torch::nn::ReLU(),
                            torch::nn::Linear(config_.bottleneck_width, config_.bottleneck_width), torch::nn::ReLU(),
                            torch::nn::Linear(config_.bottleneck_width, flat), torch::nn::ReLU()));
  up_.resize(config_.depth);
  for (int l = config_.depth - 1; l >= 0; --l) {
    const int incoming = l == config_.depth - 1 ? config_.channels[l] : config_.channels[l + 1];
    const int skip = config_.skip_active(l) ? config_.channels[l] : 0;
    up_[l] = register_module("up" + std::to_string(l), conv_block(incoming + skip, config_.channels[l]));
  }
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(config_.channels[0], config_.out_channels, 1)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != config_.in_channels || input.size(2) != height_ ||
      input.size(3) != width_) {
    throw ShapeError("U-Net expects [B, " + std::to_string(config_.in_channels) + ", " + std::to_string(height_) +
                     ", " + std::to_string(width_) + "] input");
  }
  std::vector<torch::Tensor> skips(config_.depth);
  torch::Tensor x = input;
  for (int l = 0; l < config_.depth; ++l) {
    skips[l] = down_[l]->forward(x);
    x = torch::max_pool2d(skips[l], 2);
  }
  const auto batch = x.size(0);
  x = bottleneck_->forward(x.reshape({batch, -1})).reshape({batch, -1, bottom_h_, bottom_w_});
  for (int l = config_.depth - 1; l >= 0; --l) {
    x = torch::upsample_nearest2d(x, {skips[l].size(2), skips[l].size(3)});
    if (config_.skip_active(l)) x = torch::cat({x, skips[l]}, 1);
    x = up_[l]->forward(x);
  }
  return head_->forward(x);
}

}  // namespace slotbench::nn
