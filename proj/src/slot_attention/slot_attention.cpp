#include "slotbench/slot_attention/slot_attention.hpp"

#include <cmath>

#include "slotbench/errors.hpp"

namespace slotbench::slot_attention {

std::string encoder_kind_name(EncoderKind kind) { return kind == EncoderKind::kBaseline ? "baseline" : "residual"; }

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "baseline") return EncoderKind::kBaseline;
  if (name == "residual") return EncoderKind::kResidual;
  throw ConfigError("unknown Slot Attention encoder '" + name + "' (expected baseline or residual)");
}

void SlotAttentionConfig::validate() const {
  if (num_slots < 1) throw ConfigError("Slot Attention needs at least 1 slot");
  if (slot_size < 1) throw ConfigError("Slot Attention slot size must be >= 1");
  if (iterations < 1) throw ConfigError("Slot Attention needs at least 1 iteration");
  if (mlp_hidden < 1) throw ConfigError("Slot Attention MLP width must be >= 1");
  if (!(epsilon > 0)) throw ConfigError("Slot Attention epsilon must be positive");
  if (encoder == EncoderKind::kBaseline) {
    if (conv_channels < 1 || conv_layers < 1 || conv_kernel < 1 || conv_kernel % 2 == 0) {
      throw ConfigError("baseline encoder needs positive widths and an odd kernel");
    }
  } else {
    const int factor = 1 << downscales;
    if (broadcast_size * factor != height || broadcast_size * factor != width) {
      throw ShapeError("broadcast size " + std::to_string(broadcast_size) + " with " + std::to_string(downscales) +
                       " upscales does not reach " + std::to_string(height) + "x" + std::to_string(width));
    }
  }
}

nlohmann::json SlotAttentionConfig::to_json() const {
  nlohmann::json j{{"model", "slot_attention"},
                   {"num_slots", num_slots},
                   {"slot_size", slot_size},
                   {"iterations", iterations},
                   {"mlp_hidden", mlp_hidden},
                   {"epsilon", epsilon},
                   {"encoder", encoder_kind_name(encoder)},
                   {"resolution", {height, width}}};
  if (encoder == EncoderKind::kBaseline) {
    j["conv"] = {{"channels", conv_channels}, {"layers", conv_layers}, {"kernel", conv_kernel}};
    j["broadcast_size"] = height;
  } else {
    j["downscales"] = downscales;
    j["broadcast_size"] = broadcast_size;
  }
  return j;
}

SlotAttentionImpl::SlotAttentionImpl(int feature_size, int slot_size, int num_slots, int mlp_hidden, double epsilon)
    : slot_size_(slot_size), num_slots_(num_slots), epsilon_(epsilon) {
  norm_inputs_ = register_module("norm_inputs", torch::nn::LayerNorm(torch::nn::LayerNormOptions({feature_size})));
  norm_slots_ = register_module("norm_slots", torch::nn::LayerNorm(torch::nn::LayerNormOptions({slot_size})));
  norm_mlp_ = register_module("norm_mlp", torch::nn::LayerNorm(torch::nn::LayerNormOptions({slot_size})));
  project_q_ = register_module("project_q", torch::nn::Linear(torch::nn::LinearOptions(slot_size, slot_size).bias(false)));
  project_k_ =
      register_module("project_k", torch::nn::Linear(torch::nn::LinearOptions(feature_size, slot_size).bias(false)));
  project_v_ =
      register_module("project_v", torch::nn::Linear(torch::nn::LinearOptions(feature_size, slot_size).bias(false)));
  gru_ = register_module("gru", torch::nn::GRUCell(slot_size, slot_size));
  mlp_ = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(slot_size, mlp_hidden), torch::nn::ReLU(),
                                                      torch::nn::Linear(mlp_hidden, slot_size)));
  const double bound = std::sqrt(6.0 / (1.0 + slot_size));
  slots_mu = register_parameter("slots_mu", torch::empty({1, 1, slot_size}).uniform_(-bound, bound));
  slots_log_sigma = register_parameter("slots_log_sigma", torch::empty({1, 1, slot_size}).uniform_(-bound, bound));
}

torch::Tensor SlotAttentionImpl::init_slots(std::int64_t batch, bool sample, at::Generator& generator) {
  auto mu = slots_mu.expand({batch, num_slots_, slot_size_});
  if (!sample) return mu;
  auto eps = torch::randn({batch, num_slots_, slot_size_}, generator, slots_mu.options());
  return mu + slots_log_sigma.exp() * eps;
}

torch::Tensor SlotAttentionImpl::eval_slots(std::int64_t batch, std::uint64_t seed) {
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto eps = torch::randn({1, num_slots_, slot_size_}, generator, slots_mu.options());
  return (slots_mu + slots_log_sigma.exp() * eps).expand({batch, num_slots_, slot_size_});
}

SlotState SlotAttentionImpl::iterate(const torch::Tensor& features, torch::Tensor slots, int iterations) {
  if (iterations < 1) throw InputError("Slot Attention needs at least 1 iteration, got " + std::to_string(iterations));
  const auto b = slots.size(0);
  const auto k = slots.size(1);
  auto inputs = norm_inputs_->forward(features);
  auto keys = project_k_->forward(inputs);    // [B, N, D]
  auto values = project_v_->forward(inputs);  // [B, N, D]
  const double scale = 1.0 / std::sqrt(static_cast<double>(slot_size_));

  SlotState state;
  for (int t = 0; t < iterations; ++t) {
    auto previous = slots;
    auto q = project_q_->forward(norm_slots_->forward(slots));            // [B, K, D]
    auto logits = torch::bmm(keys, q.transpose(1, 2)) * scale;            // [B, N, K]
    auto attn = torch::softmax(logits, 2);                                // normalised over slots
    auto weights = attn + epsilon_;
    weights = weights / weights.sum(1, true);                             // weighted mean over N
    auto updates = torch::bmm(weights.transpose(1, 2), values);           // [B, K, D]
    slots = gru_->forward(updates.reshape({b * k, slot_size_}), previous.reshape({b * k, slot_size_}))
                .view({b, k, slot_size_});
    slots = slots + mlp_->forward(norm_mlp_->forward(slots));
    state.attention = attn.transpose(1, 2);
  }
  state.slots = slots;
  return state;
}

SlotAttentionModelImpl::SlotAttentionModelImpl(SlotAttentionConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.encoder == EncoderKind::kBaseline) {
    feature_size_ = config_.conv_channels;
    conv_encoder_ = register_module("encoder", nn::ConvEncoder(nn::ConvEncoderConfig{
                                                   .in_channels = 3,
                                                   .channels = config_.conv_channels,
                                                   .layers = config_.conv_layers,
                                                   .kernel_size = config_.conv_kernel,
                                                   .position_embedding = true,
                                                   .height = config_.height,
                                                   .width = config_.width}));
  } else {
    auto stack = nn::residual_encoder_stack(config_.downscales);
    auto mirror = nn::mirrored_decoder_stack(stack);
    residual_encoder_ = register_module("encoder", nn::ResidualEncoder(3, stack, config_.height, config_.width));
    feature_size_ = residual_encoder_->out_channels();
    residual_decoder_ = register_module("decoder", nn::ResidualDecoder(config_.slot_size, mirror, config_.broadcast_size,
                                                                       4, config_.height, config_.width));
  }
  feature_norm_ = register_module("feature_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({feature_size_})));
  feature_mlp_ = register_module("feature_mlp",
                                 torch::nn::Sequential(torch::nn::Linear(feature_size_, feature_size_), torch::nn::ReLU(),
                                                       torch::nn::Linear(feature_size_, feature_size_)));
  attention_ = register_module("slot_attention", SlotAttention(feature_size_, config_.slot_size, config_.num_slots,
                                                               config_.mlp_hidden, config_.epsilon));
  if (config_.encoder == EncoderKind::kBaseline) {
    broadcast_decoder_ = register_module("decoder", nn::BroadcastDecoder(nn::BroadcastDecoderConfig{
                                                        .latent_size = config_.slot_size,
                                                        .channels = config_.conv_channels,
                                                        .layers = config_.conv_layers,
                                                        .kernel_size = config_.conv_kernel,
                                                        .out_channels = 4,
                                                        .height = config_.height,
                                                        .width = config_.width}));
  }
}

torch::Tensor SlotAttentionModelImpl::encode(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != config_.height ||
      images.size(3) != config_.width) {
    throw ShapeError("Slot Attention expects [B, 3, " + std::to_string(config_.height) + ", " +
                     std::to_string(config_.width) + "] images, got " + c10::str(images.sizes()));
  }
  auto maps = config_.encoder == EncoderKind::kBaseline ? conv_encoder_->forward(images)
                                                        : residual_encoder_->forward(images);
  auto flat = maps.flatten(2).transpose(1, 2);  // [B, N, C]
  return feature_mlp_->forward(feature_norm_->forward(flat));
}

SlotDecomposition SlotAttentionModelImpl::decode_slots(const torch::Tensor& slots) {
  const auto b = slots.size(0);
  const auto k = slots.size(1);
  auto flat = slots.reshape({b * k, slots.size(2)});
  auto out = config_.encoder == EncoderKind::kBaseline ? broadcast_decoder_->forward(flat)
                                                       : residual_decoder_->forward(flat);
  const auto h = out.size(2);
  const auto w = out.size(3);
  out = out.view({b, k, 4, h, w});
  SlotDecomposition d;
  d.appearance = out.narrow(2, 0, 3);
  d.mask_logits = out.select(2, 3);
  d.masks = torch::softmax(d.mask_logits, 1);
  d.reconstruction = (d.masks.unsqueeze(2) * d.appearance).sum(1);
  if (!torch::isfinite(d.reconstruction).all().item<bool>()) {
    throw NumericalError("Slot Attention decoder produced non-finite values");
  }
  d.latents = slots;
  return d;
}

SlotDecomposition SlotAttentionModelImpl::decompose_from(const torch::Tensor& images,
                                                         const torch::Tensor& initial_slots) {
  auto features = encode(images);
  auto state = attention_->iterate(features, initial_slots, config_.iterations);
  auto d = decode_slots(state.slots);
  d.attention = state.attention;
  return d;
}

SlotDecomposition SlotAttentionModelImpl::decompose(const torch::Tensor& images) {
  auto initial = is_training() ? attention_->init_slots(images.size(0), true, generator())
                               : attention_->eval_slots(images.size(0));
  return decompose_from(images, initial);
}

LossTerms SlotAttentionModelImpl::loss(const SlotDecomposition& decomposition, const torch::Tensor& images) {
  auto mse = torch::mse_loss(decomposition.reconstruction, images);
  if (!std::isfinite(mse.item<double>())) throw NumericalError("Slot Attention loss term 'mse' is not finite");
  LossTerms out;
  out.terms = {{"mse", mse}};
  out.total = mse;
  return out;
}

}  // namespace slotbench::slot_attention
