#pragma once

#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "slotbench/model.hpp"
#include "slotbench/nn/encoders.hpp"
#include "slotbench/nn/unet.hpp"

namespace slotbench::monet {

enum class MaskKlDirection {
  kAttentionToVae,  // KL(m || m_hat), the default
  kVaeToAttention,  // KL(m_hat || m)
};

struct LossParams {
  double beta = 0.5;
  double gamma = 0.5;
  double sigma_fg = 0.11;
  double sigma_bg = 0.09;
  MaskKlDirection direction = MaskKlDirection::kAttentionToVae;

  void validate() const;
};

struct MonetConfig {
  int num_slots = 6;
  int latent_size = 64;
  int mlp_width = 128;
  nn::UNetConfig unet{};
  std::vector<int> encoder_channels{32, 32, 64, 64};
  int decoder_channels = 32;
  int decoder_layers = 4;
  LossParams loss{};
  int height = 64;
  int width = 64;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ComponentOutput {
  torch::Tensor z;            // [N, D]
  torch::Tensor mean;         // [N, D]
  torch::Tensor logvar;       // [N, D], clamped to [-10, 10]
  torch::Tensor appearance;   // [N, 3, H, W]
  torch::Tensor mask_logit;   // [N, H, W]
};

inline constexpr double kLogvarLimit = 10.0;

/// Component VAE: stride-2 conv encoder over (image, log-mask) and a
/// spatial-broadcast decoder emitting 3 appearance channels + 1 mask logit.
class ComponentVaeImpl : public torch::nn::Module {
 public:
  explicit ComponentVaeImpl(const MonetConfig& config);

  /// images [N, 3, H, W], log_mask [N, 1, H, W]. Samples z with `generator`
  /// when `sample` is true, otherwise z = mean.
  ComponentOutput forward(const torch::Tensor& images, const torch::Tensor& log_mask, bool sample,
                          at::Generator& generator);

  nn::BroadcastDecoder decoder() { return decoder_; }

 private:
  int latent_size_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential head_{nullptr};
  nn::BroadcastDecoder decoder_{nullptr};
};
TORCH_MODULE(ComponentVae);

class MonetImpl : public SlotModel {
 public:
  explicit MonetImpl(MonetConfig config);

  /// Stick-breaking attention in log space: [B, 3, H, W] -> log masks [B, K, H, W].
  torch::Tensor attention_log_masks(const torch::Tensor& images);

  /// One slot through the component VAE.
  ComponentOutput component_vae_forward(const torch::Tensor& images, const torch::Tensor& log_mask, int slot);

  SlotDecomposition decompose(const torch::Tensor& images) override;
  LossTerms loss(const SlotDecomposition& decomposition, const torch::Tensor& images) override;
  int num_slots() const override { return config_.num_slots; }
  int latent_size() const override { return config_.latent_size; }
  std::string kind() const override { return "monet"; }
  nlohmann::json architecture() const override { return config_.to_json(); }

  const MonetConfig& config() const { return config_; }
  nn::UNet unet() { return unet_; }
  ComponentVae vae() { return vae_; }

 private:
  MonetConfig config_;
  nn::UNet unet_{nullptr};
  ComponentVae vae_{nullptr};
};
TORCH_MODULE(Monet);

/// -sum_pixels log sum_k m_k N(x; x_hat_k, sigma_k^2)  (slot 0 uses sigma_bg)
/// + beta * sum_k KL(q(z_k | x) || N(0, I))
/// + gamma * pixel-mean categorical KL between attention and VAE masks.
/// Batch-averaged. Terms are "nll", "kl" (beta-weighted), "mask_kl" (gamma-weighted);
/// a non-finite term raises NumericalError naming it.
LossTerms monet_loss(const SlotDecomposition& decomposition, const torch::Tensor& images, const LossParams& params);

}  // namespace slotbench::monet
