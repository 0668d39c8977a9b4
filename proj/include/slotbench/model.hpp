#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace slotbench {

/// Output of a slot-based autoencoder for a batch of B images with K slots.
/// Fields a model does not produce stay undefined.
struct SlotDecomposition {
  torch::Tensor masks;             // [B, K, H, W], sums to 1 over K
  torch::Tensor log_masks;         // [B, K, H, W]; MONet attention only
  torch::Tensor appearance;        // [B, K, 3, H, W], before masking
  torch::Tensor mask_logits;       // [B, K, H, W]; MONet VAE mask logits, SA alpha logits
  torch::Tensor vae_masks;         // [B, K, H, W]; softmax of mask_logits over K (MONet)
  torch::Tensor latents;           // [B, K, D]; sampled z (MONet) or final slots (SA)
  torch::Tensor posterior_mean;    // [B, K, D]; MONet
  torch::Tensor posterior_logvar;  // [B, K, D]; MONet
  torch::Tensor attention;         // [B, K, N]; SA attention of the last iteration
  torch::Tensor reconstruction;    // [B, 3, H, W] = sum_k masks_k * appearance_k

  /// Per-slot vectors handed to probes: posterior means for MONet, slots for SA.
  torch::Tensor representations() const { return posterior_mean.defined() ? posterior_mean : latents; }
};

/// Scalar training loss plus named additive terms; total == sum of terms.
struct LossTerms {
  torch::Tensor total;
  std::vector<std::pair<std::string, torch::Tensor>> terms;

  double term(const std::string& name) const;
};

/// Common surface of MONet and Slot Attention used by training and evaluation.
/// Stochastic parts (posterior samples, slot noise) draw from the model's own
/// generator and are switched off in eval() mode.
class SlotModel : public torch::nn::Module {
 public:
  SlotModel() : generator_(make_generator(0)) {}

  virtual SlotDecomposition decompose(const torch::Tensor& images) = 0;
  virtual LossTerms loss(const SlotDecomposition& decomposition, const torch::Tensor& images) = 0;
  virtual int num_slots() const = 0;
  virtual int latent_size() const = 0;
  virtual std::string kind() const = 0;
  /// Architecture echo stored in checkpoints.
  virtual nlohmann::json architecture() const = 0;

  void reseed(std::uint64_t seed) { generator_ = make_generator(seed); }
  torch::Tensor rng_state() const { return generator_.get_state(); }
  void set_rng_state(const torch::Tensor& state) { generator_.set_state(state); }

 protected:
  at::Generator& generator() { return generator_; }

 private:
  static at::Generator make_generator(std::uint64_t seed);
  at::Generator generator_;
};

}  // namespace slotbench
