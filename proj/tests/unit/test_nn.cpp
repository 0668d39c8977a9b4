#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../fixtures.hpp"
#include "slotbench/errors.hpp"
#include "slotbench/nn/broadcast.hpp"
#include "slotbench/nn/checkpoint.hpp"
#include "slotbench/nn/encoders.hpp"
#include "slotbench/nn/residual.hpp"
#include "slotbench/nn/unet.hpp"

using namespace slotbench;
using namespace slotbench::nn;

TEST_CASE("spatial broadcast tiles latents and appends coordinate ramps") {
  auto z = torch::tensor({{1.0f, 2.0f}, {3.0f, 4.0f}});
  auto b = spatial_broadcast(z, 3, 5);
  REQUIRE(b.sizes() == torch::IntArrayRef({2, 4, 3, 5}));
  CHECK(torch::all(b[1][0] == 3.0f).item<bool>());
  CHECK(b[0][2][1][0].item<float>() == -1.0f);
  CHECK(b[0][2][1][4].item<float>() == 1.0f);
  CHECK(b[0][3][0][2].item<float>() == -1.0f);
  CHECK(b[0][3][2][2].item<float>() == 1.0f);
  SpatialBroadcastConfig cfg{3, 4, 4};
  CHECK_THROWS_AS(spatial_broadcast(z, cfg), ShapeError);
}

TEST_CASE("soft position embedding adds the same term to every image") {
  SoftPositionEmbedding pos(8, 4, 6);
  auto x = torch::zeros({2, 8, 4, 6});
  auto y = pos->forward(x);
  CHECK(torch::allclose(y[0], y[1]));
  CHECK(torch::allclose(y, pos->embedding().expand_as(y)));
  CHECK_THROWS_AS(pos->forward(torch::zeros({1, 8, 5, 6})), ShapeError);
}

TEST_CASE("residual encoder stack layout") {
  for (int d : {1, 2}) {
    const auto enc = residual_encoder_stack(d);
    CHECK(enc.downscales() == d);
    CHECK(enc.out_channels() == 256);
    const auto dec = mirrored_decoder_stack(enc);
    CHECK(dec.upscales() == d);
    CHECK(dec.in_channels == 256);
    CHECK(dec.out_channels() == 64);
  }
  CHECK_THROWS_AS(residual_encoder_stack(3), ConfigError);
}

TEST_CASE("residual blocks start as the identity and open with the gate") {
  ResidualBlock block(4);
  auto x = torch::randn({1, 4, 5, 5});
  CHECK(torch::equal(block->forward(x), x));
  {
    torch::NoGradGuard g;
    block->gate.fill_(0.5);
  }
  CHECK(torch::allclose(block->forward(x), x + 0.5 * block->branch(x)));
}

TEST_CASE("gate receives gradient at initialisation") {
  ResidualBlock block(4);
  block->forward(torch::randn({1, 4, 5, 5})).pow(2).sum().backward();
  CHECK(block->gate.grad().abs().item<float>() > 0.0f);
}

TEST_CASE("residual stack output shapes") {
  ResidualStack enc(residual_encoder_stack(2));
  auto y = enc->forward(torch::randn({1, 64, 16, 16}));
  CHECK(y.sizes() == torch::IntArrayRef({1, 256, 4, 4}));
  ResidualStack dec(mirrored_decoder_stack(enc->config()));
  CHECK(dec->forward(y).sizes() == torch::IntArrayRef({1, 64, 16, 16}));
}

TEST_CASE("UNet keeps the spatial size for every skip count") {
  for (int skips = 0; skips <= 3; ++skips) {
    UNetConfig cfg;
    cfg.depth = 3;
    cfg.channels = {4, 8, 8};
    cfg.num_skip_connections = skips;
    cfg.bottleneck_width = 16;
    UNet net(cfg, 16, 16);
    CHECK(net->forward(torch::randn({2, 4, 16, 16})).sizes() == torch::IntArrayRef({2, 1, 16, 16}));
  }
  UNetConfig bad;
  bad.depth = 3;
  bad.channels = {4, 8};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.channels = {4, 8, 8};
  bad.num_skip_connections = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("UNet skip schedule removes the finest skips first") {
  UNetConfig cfg;
  cfg.depth = 5;
  cfg.num_skip_connections = 3;
  CHECK_FALSE(cfg.skip_active(0));
  CHECK_FALSE(cfg.skip_active(1));
  CHECK(cfg.skip_active(2));
  CHECK(cfg.skip_active(4));
}

TEST_CASE("encoders and decoders produce the documented shapes") {
  ConvEncoderConfig ec;
  ec.channels = 8;
  ec.layers = 2;
  ec.kernel_size = 3;
  ec.height = ec.width = 16;
  ConvEncoder enc(ec);
  CHECK(enc->forward(torch::rand({2, 3, 16, 16})).sizes() == torch::IntArrayRef({2, 8, 16, 16}));

  BroadcastDecoderConfig dc;
  dc.latent_size = 6;
  dc.channels = 8;
  dc.layers = 2;
  dc.kernel_size = 3;
  dc.height = dc.width = 16;
  BroadcastDecoder dec(dc);
  CHECK(dec->forward(torch::randn({3, 6})).sizes() == torch::IntArrayRef({3, 4, 16, 16}));
}

TEST_CASE("checkpoint round trip preserves tensors bit for bit") {
  fixtures::TempDir tmp("ckpt");
  ResidualStack a(residual_encoder_stack(1)), b(residual_encoder_stack(1));
  Checkpoint ck;
  ck.architecture = {{"kind", "stack"}};
  ck.meta = {{"step", 12}};
  append_module_state(ck, *a);
  ck.tensors.emplace_back("extra/ints", torch::arange(5, torch::kInt64));
  save_checkpoint(tmp / "a.ckpt", ck);

  const auto loaded = load_checkpoint(tmp / "a.ckpt");
  CHECK(loaded.meta["step"] == 12);
  CHECK(loaded.architecture == ck.architecture);
  REQUIRE(loaded.find("extra/ints") != nullptr);
  CHECK(torch::equal(*loaded.find("extra/ints"), torch::arange(5, torch::kInt64)));
  load_module_state(loaded, *b);
  auto pa = a->named_parameters(), pb = b->named_parameters();
  for (const auto& p : pa) CHECK(torch::equal(p.value(), pb[p.key()]));

  ResidualStack other(residual_encoder_stack(2));
  CHECK_THROWS(load_module_state(loaded, *other));
}

TEST_CASE("a truncated checkpoint is rejected") {
  fixtures::TempDir tmp("ckpt_bad");
  Checkpoint ck;
  ck.tensors.emplace_back("x", torch::ones({100}));
  save_checkpoint(tmp / "a.ckpt", ck);
  std::filesystem::resize_file(tmp / "a.ckpt", std::filesystem::file_size(tmp / "a.ckpt") - 10);
  CHECK_THROWS(load_checkpoint(tmp / "a.ckpt"));
}
