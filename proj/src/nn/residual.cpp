#include "slotbench/nn/residual.hpp"

#include <algorithm>

#include "slotbench/errors.hpp"

namespace slotbench::nn {

int ResidualStackConfig::out_channels() const {
  int c = in_channels;
  for (const auto& e : entries) {
    if (e.kind == StackEntry::Kind::kBlock) c = e.channels;
  }
  return c;
}

int ResidualStackConfig::downscales() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const StackEntry& e) { return e.kind == StackEntry::Kind::kDownscale; }));
}

int ResidualStackConfig::upscales() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const StackEntry& e) { return e.kind == StackEntry::Kind::kUpscale; }));
}

ResidualStackConfig residual_encoder_stack(int downscales) {
  if (downscales != 1 && downscales != 2) throw ConfigError("residual encoder supports 1 or 2 downscales");
  ResidualStackConfig cfg;
  cfg.in_channels = 64;
  for (int i = 0; i < 4; ++i) cfg.entries.push_back(StackEntry::block(64));
  if (downscales == 2) cfg.entries.push_back(StackEntry::downscale());
  for (int i = 0; i < 4; ++i) cfg.entries.push_back(StackEntry::block(64));
  cfg.entries.push_back(StackEntry::downscale());
  for (int i = 0; i < 4; ++i) cfg.entries.push_back(StackEntry::block(128));
  for (int i = 0; i < 4; ++i) cfg.entries.push_back(StackEntry::block(256));
  return cfg;
}

ResidualStackConfig mirrored_decoder_stack(const ResidualStackConfig& encoder) {
  ResidualStackConfig cfg;
  cfg.in_channels = encoder.out_channels();
  for (auto it = encoder.entries.rbegin(); it != encoder.entries.rend(); ++it) {
    switch (it->kind) {
      case StackEntry::Kind::kBlock:
        cfg.entries.push_back(*it);
        break;
      case StackEntry::Kind::kDownscale:
        cfg.entries.push_back(StackEntry::upscale());
        break;
      case StackEntry::Kind::kUpscale:
        cfg.entries.push_back(StackEntry::downscale());
        break;
    }
  }
  return cfg;
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  gate = register_parameter("gate", torch::zeros({1}));
}

torch::Tensor ResidualBlockImpl::branch(const torch::Tensor& x) {
  auto h = torch::leaky_relu(conv1_->forward(x), kLeakySlope);
  return conv2_->forward(h);
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + gate * branch(x); }

UpscaleImpl::UpscaleImpl(int channels) {
  conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
}

torch::Tensor UpscaleImpl::forward(const torch::Tensor& x) {
  return conv_->forward(torch::upsample_nearest2d(x, {x.size(2) * 2, x.size(3) * 2}));
}

ResidualStackImpl::ResidualStackImpl(ResidualStackConfig config) : config_(std::move(config)) {
  int c = config_.in_channels;
  int index = 0;
  for (const auto& e : config_.entries) {
    const std::string name = "layer" + std::to_string(index++);
    switch (e.kind) {
      case StackEntry::Kind::kBlock: {
        if (e.channels < 1) throw ConfigError("residual block width must be positive");
        if (e.channels != c) {
          auto proj = register_module(name + "_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, e.channels, 1)));
          layers_.push_back({LayerKind::kProjection, torch::nn::AnyModule(proj)});
          c = e.channels;
        }
        auto block = register_module(name, ResidualBlock(c));
        layers_.push_back({LayerKind::kBlock, torch::nn::AnyModule(block)});
        break;
      }
      case StackEntry::Kind::kDownscale: {
        auto down =
            register_module(name, torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).stride(2).padding(1)));
        layers_.push_back({LayerKind::kDownscale, torch::nn::AnyModule(down)});
        break;
      }
      case StackEntry::Kind::kUpscale: {
        auto up = register_module(name, Upscale(c));
        layers_.push_back({LayerKind::kUpscale, torch::nn::AnyModule(up)});
        break;
      }
    }
  }
}

torch::Tensor ResidualStackImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != config_.in_channels) {
    throw ShapeError("residual stack expects " + std::to_string(config_.in_channels) + " input channels, got " +
                     (input.dim() == 4 ? std::to_string(input.size(1)) : std::string("a non-4D tensor")));
  }
  torch::Tensor x = input;
  for (auto& layer : layers_) x = layer.module.forward(x);
  return x;
}

}  // namespace slotbench::nn
