#include "slotbench/nn/encoders.hpp"

#include <string>

#include "slotbench/errors.hpp"

namespace slotbench::nn {

ConvEncoderImpl::ConvEncoderImpl(ConvEncoderConfig config) : config_(config) {
  if (config_.layers < 1 || config_.channels < 1) throw ConfigError("conv encoder needs >= 1 layer and channel");
  convs_ = torch::nn::Sequential();
  int in = config_.in_channels;
  for (int i = 0; i < config_.layers; ++i) {
    convs_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, config_.channels, config_.kernel_size).padding(config_.kernel_size / 2)));
    convs_->push_back(torch::nn::ReLU());
    in = config_.channels;
  }
  convs_ = register_module("convs", convs_);
  if (config_.position_embedding) {
    position_ = register_module("position", SoftPositionEmbedding(config_.channels, config_.height, config_.width));
  }
}

torch::Tensor ConvEncoderImpl::forward(const torch::Tensor& image) {
  auto x = convs_->forward(image);
  return config_.position_embedding ? position_->forward(x) : x;
}

ResidualEncoderImpl::ResidualEncoderImpl(int in_channels, ResidualStackConfig stack, int height, int width) {
  const int factor = 1 << stack.downscales();
  if (height % factor != 0 || width % factor != 0) {
    throw ShapeError("residual encoder with " + std::to_string(stack.downscales()) +
                     " downscales needs H and W divisible by " + std::to_string(factor));
  }
  out_height_ = height / factor;
  out_width_ = width / factor;
  input_ = register_module("input",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, stack.in_channels, 3).padding(1)));
  const int out = stack.out_channels();
  stack_ = register_module("stack", ResidualStack(std::move(stack)));
  position_ = register_module("position", SoftPositionEmbedding(out, out_height_, out_width_));
}

torch::Tensor ResidualEncoderImpl::forward(const torch::Tensor& image) {
  return position_->forward(stack_->forward(input_->forward(image)));
}

BroadcastDecoderImpl::BroadcastDecoderImpl(BroadcastDecoderConfig config) : config_(config) {
  body_ = torch::nn::Sequential();
  int in = config_.latent_size + 2;
  for (int i = 0; i < config_.layers; ++i) {
    body_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, config_.channels, config_.kernel_size).padding(config_.kernel_size / 2)));
    body_->push_back(torch::nn::ReLU());
    in = config_.channels;
  }
  body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, config_.out_channels, 3).padding(1)));
  body_ = register_module("body", body_);
}

torch::Tensor BroadcastDecoderImpl::forward(const torch::Tensor& latents) {
  return body_->forward(spatial_broadcast(latents, config_.height, config_.width));
}

ResidualDecoderImpl::ResidualDecoderImpl(int latent_size, ResidualStackConfig stack, int broadcast_size,
                                         int out_channels, int height, int width)
    : broadcast_size_(broadcast_size) {
  const int factor = 1 << stack.upscales();
  if (broadcast_size * factor != height || broadcast_size * factor != width) {
    throw ShapeError("residual decoder: broadcast size " + std::to_string(broadcast_size) + " with " +
                     std::to_string(stack.upscales()) + " upscales does not reach " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  input_ = register_module(
      "input", torch::nn::Conv2d(torch::nn::Conv2dOptions(latent_size + 2, stack.in_channels, 3).padding(1)));
  const int last = stack.out_channels();
  stack_ = register_module("stack", ResidualStack(std::move(stack)));
  output_ = register_module("output", torch::nn::Conv2d(torch::nn::Conv2dOptions(last, out_channels, 3).padding(1)));
}

torch::Tensor ResidualDecoderImpl::forward(const torch::Tensor& latents) {
  auto x = spatial_broadcast(latents, broadcast_size_, broadcast_size_);
  return output_->forward(stack_->forward(input_->forward(x)));
}

}  // namespace slotbench::nn
