#include "slotbench/monet/monet.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "slotbench/errors.hpp"

namespace slotbench::monet {

void LossParams::validate() const {
  if (beta < 0 || gamma < 0) throw ConfigError("MONet beta and gamma must be non-negative");
  if (!(sigma_fg > 0) || !(sigma_bg > 0)) throw ConfigError("MONet sigmas must be positive");
}

void MonetConfig::validate() const {
  if (num_slots < 2) throw ConfigError("MONet needs at least 2 slots");
  if (latent_size < 1) throw ConfigError("MONet latent size must be >= 1");
  if (mlp_width < 1 || decoder_channels < 1 || decoder_layers < 1) throw ConfigError("MONet widths must be positive");
  if (encoder_channels.empty()) throw ConfigError("MONet VAE encoder needs at least one conv");
  const int factor = 1 << encoder_channels.size();
  if (height % factor != 0 || width % factor != 0) {
    throw ShapeError("MONet VAE encoder with " + std::to_string(encoder_channels.size()) +
                     " stride-2 convs needs H and W divisible by " + std::to_string(factor));
  }
  unet.validate();
  if (unet.in_channels != 4 || unet.out_channels != 1) {
    throw ConfigError("MONet attention U-Net must map 4 channels (image + log scope) to 1 logit");
  }
  loss.validate();
}

nlohmann::json MonetConfig::to_json() const {
  return {{"model", "monet"},
          {"num_slots", num_slots},
          {"latent_size", latent_size},
          {"mlp_width", mlp_width},
          {"unet",
           {{"depth", unet.depth},
            {"channels", unet.channels},
            {"num_skip_connections", unet.num_skip_connections},
            {"bottleneck_width", unet.bottleneck_width}}},
          {"encoder_channels", encoder_channels},
          {"decoder_channels", decoder_channels},
          {"decoder_layers", decoder_layers},
          {"decoder_input_channels", latent_size + 2},
          {"loss",
           {{"beta", loss.beta},
            {"gamma", loss.gamma},
            {"sigma_fg", loss.sigma_fg},
            {"sigma_bg", loss.sigma_bg},
            {"mask_kl", loss.direction == MaskKlDirection::kAttentionToVae ? "attention_to_vae" : "vae_to_attention"}}},
          {"resolution", {height, width}}};
}

ComponentVaeImpl::ComponentVaeImpl(const MonetConfig& config) : latent_size_(config.latent_size) {
  encoder_ = torch::nn::Sequential();
  int in = 4;
  for (int c : config.encoder_channels) {
    encoder_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, c, 3).stride(2).padding(1)));
    encoder_->push_back(torch::nn::ReLU());
    in = c;
  }
  encoder_ = register_module("encoder", encoder_);
  const int factor = 1 << config.encoder_channels.size();
  const int flat = in * (config.height / factor) * (config.width / factor);
  head_ = register_module("head", torch::nn::Sequential(torch::nn::Linear(flat, config.mlp_width), torch::nn::ReLU(),
                                                        torch::nn::Linear(config.mlp_width, 2 * config.latent_size)));
  decoder_ = register_module("decoder", nn::BroadcastDecoder(nn::BroadcastDecoderConfig{
                                            .latent_size = config.latent_size,
                                            .channels = config.decoder_channels,
                                            .layers = config.decoder_layers,
                                            .kernel_size = 3,
                                            .out_channels = 4,
                                            .height = config.height,
                                            .width = config.width}));
}

ComponentOutput ComponentVaeImpl::forward(const torch::Tensor& images, const torch::Tensor& log_mask, bool sample,
                                          at::Generator& generator) {
  auto h = encoder_->forward(torch::cat({images, log_mask}, 1));
  auto params = head_->forward(h.flatten(1));
  ComponentOutput out;
  out.mean = params.narrow(1, 0, latent_size_);
  out.logvar = params.narrow(1, latent_size_, latent_size_).clamp(-kLogvarLimit, kLogvarLimit);
  if (sample) {
    auto eps = torch::randn(out.mean.sizes(), generator, out.mean.options());
    out.z = out.mean + torch::exp(0.5 * out.logvar) * eps;
  } else {
    out.z = out.mean;
  }
  auto decoded = decoder_->forward(out.z);
  out.appearance = decoded.narrow(1, 0, 3);
  out.mask_logit = decoded.select(1, 3);
  return out;
}

MonetImpl::MonetImpl(MonetConfig config) : config_(std::move(config)) {
  config_.validate();
  unet_ = register_module("unet", nn::UNet(config_.unet, config_.height, config_.width));
  vae_ = register_module("vae", ComponentVae(config_));
}

torch::Tensor MonetImpl::attention_log_masks(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("MONet expects [B, 3, H, W] images");
  const auto b = images.size(0);
  auto log_scope = torch::zeros({b, 1, images.size(2), images.size(3)}, images.options());
  std::vector<torch::Tensor> log_masks;
  log_masks.reserve(config_.num_slots);
  for (int k = 0; k < config_.num_slots - 1; ++k) {
    auto logits = unet_->forward(torch::cat({images, log_scope}, 1));
    log_masks.push_back(log_scope + torch::log_sigmoid(logits));
    log_scope = log_scope + torch::log_sigmoid(-logits);
  }
  log_masks.push_back(log_scope);
  return torch::cat(log_masks, 1);
}

ComponentOutput MonetImpl::component_vae_forward(const torch::Tensor& images, const torch::Tensor& log_mask, int slot) {
  ComponentOutput out = vae_->forward(images, log_mask, is_training(), generator());
  for (const auto* t : {&out.appearance, &out.mask_logit, &out.mean}) {
    if (!torch::isfinite(*t).all().item<bool>()) {
      throw NumericalError("MONet component VAE produced non-finite activations for slot " + std::to_string(slot));
    }
  }
  return out;
}

SlotDecomposition MonetImpl::decompose(const torch::Tensor& images) {
  const auto b = images.size(0);
  const auto k = config_.num_slots;
  const auto h = images.size(2);
  const auto w = images.size(3);

  SlotDecomposition d;
  d.log_masks = attention_log_masks(images);
  d.masks = d.log_masks.exp();

  // All slots go through the shared VAE as one batch of B*K.
  auto tiled = images.unsqueeze(1).expand({b, k, 3, h, w}).reshape({b * k, 3, h, w});
  auto out = vae_->forward(tiled, d.log_masks.reshape({b * k, 1, h, w}), is_training(), generator());
  if (!torch::isfinite(out.appearance).all().item<bool>() || !torch::isfinite(out.mask_logit).all().item<bool>()) {
    auto bad = (~torch::isfinite(out.appearance.flatten(1)).all(1)).logical_or(
        ~torch::isfinite(out.mask_logit.flatten(1)).all(1));
    const auto first = bad.nonzero()[0][0].item<std::int64_t>();
    throw NumericalError("MONet component VAE produced non-finite activations for slot " + std::to_string(first % k));
  }
  d.latents = out.z.view({b, k, -1});
  d.posterior_mean = out.mean.view({b, k, -1});
  d.posterior_logvar = out.logvar.view({b, k, -1});
  d.appearance = out.appearance.view({b, k, 3, h, w});
  d.mask_logits = out.mask_logit.view({b, k, h, w});
  d.vae_masks = torch::softmax(d.mask_logits, 1);
  d.reconstruction = (d.masks.unsqueeze(2) * d.appearance).sum(1);
  return d;
}

LossTerms MonetImpl::loss(const SlotDecomposition& decomposition, const torch::Tensor& images) {
  return monet_loss(decomposition, images, config_.loss);
}

namespace {

void require_finite(const torch::Tensor& t, const char* name) {
  if (!std::isfinite(t.item<double>())) throw NumericalError(std::string("MONet loss term '") + name + "' is not finite");
}

}  // namespace

LossTerms monet_loss(const SlotDecomposition& d, const torch::Tensor& images, const LossParams& params) {
  params.validate();
  const auto k = d.masks.size(1);
  const auto batch = static_cast<double>(images.size(0));

  auto sigma = torch::full({k}, params.sigma_fg, images.options());
  sigma.index_put_({0}, params.sigma_bg);
  sigma = sigma.view({1, k, 1, 1, 1});
  // log N(x; x_hat_k, sigma_k^2) summed over the three channels -> [B, K, H, W]
  auto diff = images.unsqueeze(1) - d.appearance;
  auto log_normal =
      (-0.5 * std::log(2.0 * std::numbers::pi) - torch::log(sigma) - diff.pow(2) / (2.0 * sigma.pow(2))).sum(2);
  auto log_masks = d.log_masks.defined() ? d.log_masks : torch::log(d.masks.clamp_min(1e-30));
  auto log_mixture = torch::logsumexp(log_masks + log_normal, 1);
  auto nll = -log_mixture.sum() / batch;

  torch::Tensor kl = torch::zeros({}, images.options());
  if (d.posterior_mean.defined()) {
    const auto& mu = d.posterior_mean;
    const auto& lv = d.posterior_logvar;
    kl = 0.5 * (mu.pow(2) + lv.exp() - 1.0 - lv).sum() / batch;
  }

  torch::Tensor mask_kl = torch::zeros({}, images.options());
  if (d.mask_logits.defined()) {
    auto log_vae = torch::log_softmax(d.mask_logits, 1);
    torch::Tensor per_pixel;
    if (params.direction == MaskKlDirection::kAttentionToVae) {
      per_pixel = torch::where(d.masks > 0, d.masks * (log_masks - log_vae), torch::zeros_like(d.masks)).sum(1);
    } else {
      per_pixel = (log_vae.exp() * (log_vae - log_masks)).sum(1);
    }
    mask_kl = per_pixel.mean({1, 2}).sum() / batch;
  }

  LossTerms out;
  out.terms = {{"nll", nll}, {"kl", kl * params.beta}, {"mask_kl", mask_kl * params.gamma}};
  for (const auto& [name, t] : out.terms) require_finite(t, name.c_str());
  out.total = out.terms[0].second + out.terms[1].second + out.terms[2].second;
  return out;
}

}  // namespace slotbench::monet
