#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "slotbench/errors.hpp"
#include "slotbench/monet/monet.hpp"

using namespace slotbench;
using namespace slotbench::monet;

namespace {

MonetConfig tiny(int slots = 4) {
  MonetConfig c;
  c.num_slots = slots;
  c.latent_size = 4;
  c.mlp_width = 16;
  c.unet.depth = 3;
  c.unet.channels = {4, 8, 8};
  c.unet.num_skip_connections = 3;
  c.unet.bottleneck_width = 16;
  c.encoder_channels = {4, 8, 8};
  c.decoder_channels = 4;
  c.decoder_layers = 2;
  c.height = c.width = 16;
  return c;
}

double normal_log_pdf(double x, double mu, double sigma) {
  return -0.5 * std::log(2 * std::numbers::pi) - std::log(sigma) - (x - mu) * (x - mu) / (2 * sigma * sigma);
}

}  // namespace

TEST_CASE("decomposition shapes and mask normalisation") {
  torch::manual_seed(0);
  Monet m(tiny());
  auto x = torch::rand({2, 3, 16, 16});
  const auto d = m->decompose(x);
  CHECK(d.masks.sizes() == torch::IntArrayRef({2, 4, 16, 16}));
  CHECK(d.appearance.sizes() == torch::IntArrayRef({2, 4, 3, 16, 16}));
  CHECK(d.posterior_mean.sizes() == torch::IntArrayRef({2, 4, 4}));
  CHECK(torch::allclose(d.masks.sum(1), torch::ones({2, 16, 16}), 0, 1e-5));
  CHECK(torch::allclose(d.vae_masks.sum(1), torch::ones({2, 16, 16}), 0, 1e-5));
  CHECK(torch::allclose(d.reconstruction, (d.masks.unsqueeze(2) * d.appearance).sum(1)));
  CHECK(d.representations().data_ptr() == d.posterior_mean.data_ptr());
}

TEST_CASE("eval mode is deterministic and uses the posterior mean") {
  torch::manual_seed(1);
  Monet m(tiny());
  m->eval();
  auto x = torch::rand({1, 3, 16, 16});
  const auto a = m->decompose(x), b = m->decompose(x);
  CHECK(torch::equal(a.reconstruction, b.reconstruction));
  CHECK(torch::equal(a.latents, a.posterior_mean));
}

TEST_CASE("training mode samples from the model generator") {
  torch::manual_seed(2);
  Monet m(tiny());
  m->train();
  auto x = torch::rand({1, 3, 16, 16});
  m->reseed(5);
  const auto a = m->decompose(x);
  m->reseed(5);
  const auto b = m->decompose(x);
  const auto c = m->decompose(x);
  CHECK(torch::equal(a.latents, b.latents));
  CHECK_FALSE(torch::equal(a.latents, c.latents));
}

TEST_CASE("mixture likelihood matches a hand computation") {
  // One pixel, two slots, known masks and means.
  SlotDecomposition d;
  d.masks = torch::tensor({0.25, 0.75}, torch::kFloat64).view({1, 2, 1, 1});
  d.appearance = torch::zeros({1, 2, 3, 1, 1}, torch::kFloat64);
  d.appearance[0][1].fill_(0.5);
  auto x = torch::full({1, 3, 1, 1}, 0.4, torch::kFloat64);
  LossParams p;
  p.beta = 0;
  p.gamma = 0;
  const auto l = monet_loss(d, x, p);
  const double bg = 3 * normal_log_pdf(0.4, 0.0, p.sigma_bg);
  const double fg = 3 * normal_log_pdf(0.4, 0.5, p.sigma_fg);
  const double expected = -std::log(0.25 * std::exp(bg) + 0.75 * std::exp(fg));
  CHECK(l.term("nll") == doctest::Approx(expected).epsilon(1e-12));
  CHECK(l.term("kl") == 0.0);
  CHECK(l.term("mask_kl") == 0.0);
}

TEST_CASE("latent KL matches the closed form") {
  SlotDecomposition d;
  d.masks = torch::full({1, 2, 1, 1}, 0.5, torch::kFloat64);
  d.appearance = torch::zeros({1, 2, 3, 1, 1}, torch::kFloat64);
  d.posterior_mean = torch::tensor({1.0, 0.0, -2.0, 0.5}, torch::kFloat64).view({1, 2, 2});
  d.posterior_logvar = torch::tensor({0.0, std::log(2.0), 0.0, 0.0}, torch::kFloat64).view({1, 2, 2});
  LossParams p;
  p.beta = 1.0;
  p.gamma = 0.0;
  const auto l = monet_loss(d, torch::zeros({1, 3, 1, 1}, torch::kFloat64), p);
  const double expected = 0.5 * (1.0 + (2.0 - 1.0 - std::log(2.0)) + 4.0 + 0.25);
  CHECK(l.term("kl") == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mask KL vanishes when attention and VAE masks agree") {
  SlotDecomposition d;
  auto logits = torch::randn({1, 3, 2, 2}, torch::kFloat64);
  d.mask_logits = logits;
  d.log_masks = torch::log_softmax(logits, 1);
  d.masks = d.log_masks.exp();
  d.appearance = torch::zeros({1, 3, 3, 2, 2}, torch::kFloat64);
  LossParams p;
  for (auto dir : {MaskKlDirection::kAttentionToVae, MaskKlDirection::kVaeToAttention}) {
    p.direction = dir;
    CHECK(std::abs(monet_loss(d, torch::zeros({1, 3, 2, 2}, torch::kFloat64), p).term("mask_kl")) < 1e-12);
  }
  d.mask_logits = torch::randn({1, 3, 2, 2}, torch::kFloat64);
  CHECK(monet_loss(d, torch::zeros({1, 3, 2, 2}, torch::kFloat64), p).term("mask_kl") > 0.0);
}

TEST_CASE("invalid configurations are rejected") {
  auto c = tiny();
  c.num_slots = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.loss.sigma_fg = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.loss.beta = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("non-finite inputs raise a numerical error naming the term") {
  torch::manual_seed(3);
  SlotDecomposition d;
  d.masks = torch::full({1, 2, 1, 1}, 0.5);
  d.appearance = torch::zeros({1, 2, 3, 1, 1});
  auto x = torch::full({1, 3, 1, 1}, std::nanf(""));
  try {
    monet_loss(d, x, LossParams{});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("nll") != std::string::npos);
  }
}
