#pragma once

#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "slotbench/model.hpp"
#include "slotbench/nn/encoders.hpp"

namespace slotbench::slot_attention {

enum class EncoderKind {
  kBaseline,  // 4 same-size convs, full-resolution broadcast decoder
  kResidual,  // ReZero residual stack with a mirrored decoder
};

std::string encoder_kind_name(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& name);

struct SlotAttentionConfig {
  int num_slots = 6;
  int slot_size = 64;
  int iterations = 3;
  int mlp_hidden = 128;
  double epsilon = 1e-8;
  EncoderKind encoder = EncoderKind::kBaseline;
  // Baseline conv encoder / broadcast decoder.
  int conv_channels = 64;
  int conv_layers = 4;
  int conv_kernel = 5;
  // Residual variant.
  int downscales = 1;
  int broadcast_size = 32;
  int height = 64;
  int width = 64;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SlotState {
  torch::Tensor slots;      // [B, K, D]
  torch::Tensor attention;  // [B, K, N], sums to 1 over K
};

/// Iterative attention over N input features producing K slots.
class SlotAttentionImpl : public torch::nn::Module {
 public:
  SlotAttentionImpl(int feature_size, int slot_size, int num_slots, int mlp_hidden, double epsilon);

  /// mu + exp(log_sigma) * eps when `sample`, otherwise mu. [B, K, D].
  torch::Tensor init_slots(std::int64_t batch, bool sample, at::Generator& generator);
  /// Evaluation initialisation: mu + exp(log_sigma) * eps with one fixed-seed eps
  /// of shape [1, K, D] shared by every image. Slots that all start at mu stay
  /// identical through the updates, so some fixed noise is needed to break symmetry.
  torch::Tensor eval_slots(std::int64_t batch, std::uint64_t seed = kEvalNoiseSeed);

  static constexpr std::uint64_t kEvalNoiseSeed = 0x51075eed;

  /// features [B, N, F], slots [B, K, D]; T >= 1 rounds.
  SlotState iterate(const torch::Tensor& features, torch::Tensor slots, int iterations);

  torch::Tensor slots_mu;         // [1, 1, D]
  torch::Tensor slots_log_sigma;  // [1, 1, D]

 private:
  int slot_size_;
  int num_slots_;
  double epsilon_;
  torch::nn::LayerNorm norm_inputs_{nullptr};
  torch::nn::LayerNorm norm_slots_{nullptr};
  torch::nn::LayerNorm norm_mlp_{nullptr};
  torch::nn::Linear project_q_{nullptr};
  torch::nn::Linear project_k_{nullptr};
  torch::nn::Linear project_v_{nullptr};
  torch::nn::GRUCell gru_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(SlotAttention);

class SlotAttentionModelImpl : public SlotModel {
 public:
  explicit SlotAttentionModelImpl(SlotAttentionConfig config);

  /// [B, 3, H, W] -> [B, N, F] after position embedding, LayerNorm and MLP.
  torch::Tensor encode(const torch::Tensor& images);

  /// Per-slot decode: fills masks, mask_logits, appearance, reconstruction.
  SlotDecomposition decode_slots(const torch::Tensor& slots);

  /// Full pass from explicit initial slots [B, K, D].
  SlotDecomposition decompose_from(const torch::Tensor& images, const torch::Tensor& initial_slots);

  SlotDecomposition decompose(const torch::Tensor& images) override;
  /// Single term "mse": mean squared error of the combined reconstruction.
  LossTerms loss(const SlotDecomposition& decomposition, const torch::Tensor& images) override;
  int num_slots() const override { return config_.num_slots; }
  int latent_size() const override { return config_.slot_size; }
  std::string kind() const override { return "slot_attention"; }
  nlohmann::json architecture() const override { return config_.to_json(); }

  const SlotAttentionConfig& config() const { return config_; }
  SlotAttention attention() { return attention_; }
  int feature_size() const { return feature_size_; }

 private:
  SlotAttentionConfig config_;
  int feature_size_ = 0;
  nn::ConvEncoder conv_encoder_{nullptr};
  nn::ResidualEncoder residual_encoder_{nullptr};
  torch::nn::LayerNorm feature_norm_{nullptr};
  torch::nn::Sequential feature_mlp_{nullptr};
  SlotAttention attention_{nullptr};
  nn::BroadcastDecoder broadcast_decoder_{nullptr};
  nn::ResidualDecoder residual_decoder_{nullptr};
};
TORCH_MODULE(SlotAttentionModel);

}  // namespace slotbench::slot_attention
