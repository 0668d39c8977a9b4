#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slotbench/errors.hpp"
#include "slotbench/slot_attention/slot_attention.hpp"

using namespace slotbench;
using namespace slotbench::slot_attention;

namespace {

SlotAttentionConfig tiny() {
  SlotAttentionConfig c;
  c.num_slots = 4;
  c.slot_size = 8;
  c.iterations = 2;
  c.mlp_hidden = 16;
  c.conv_channels = 8;
  c.conv_layers = 2;
  c.conv_kernel = 3;
  c.height = c.width = 16;
  return c;
}

}  // namespace

TEST_CASE("baseline model shapes and normalisation") {
  torch::manual_seed(0);
  SlotAttentionModel m(tiny());
  auto x = torch::rand({3, 3, 16, 16});
  const auto d = m->decompose(x);
  CHECK(d.latents.sizes() == torch::IntArrayRef({3, 4, 8}));
  CHECK(d.masks.sizes() == torch::IntArrayRef({3, 4, 16, 16}));
  CHECK(d.attention.sizes() == torch::IntArrayRef({3, 4, 256}));
  CHECK(torch::allclose(d.attention.sum(1), torch::ones({3, 256}), 0, 1e-5));
  CHECK(torch::allclose(d.masks.sum(1), torch::ones({3, 16, 16}), 0, 1e-5));
  CHECK(torch::allclose(d.reconstruction, (d.masks.unsqueeze(2) * d.appearance).sum(1), 0, 1e-6));
}

TEST_CASE("residual variant decodes back to the input resolution") {
  torch::manual_seed(1);
  auto c = tiny();
  c.encoder = EncoderKind::kResidual;
  c.downscales = 1;
  c.broadcast_size = 8;
  SlotAttentionModel m(c);
  const auto d = m->decompose(torch::rand({1, 3, 16, 16}));
  CHECK(d.reconstruction.sizes() == torch::IntArrayRef({1, 3, 16, 16}));
  CHECK(m->feature_size() == 256);
}

TEST_CASE("loss is the mean squared reconstruction error") {
  torch::manual_seed(2);
  SlotAttentionModel m(tiny());
  auto x = torch::rand({2, 3, 16, 16});
  const auto d = m->decompose(x);
  const auto l = m->loss(d, x);
  REQUIRE(l.terms.size() == 1);
  CHECK(l.terms[0].first == "mse");
  CHECK(l.total.item<double>() == doctest::Approx((d.reconstruction - x).pow(2).mean().item<double>()));
}

TEST_CASE("evaluation slots are fixed, distinct and independent of the batch") {
  torch::manual_seed(3);
  SlotAttention sa(8, 8, 5, 16, 1e-8);
  auto a = sa->eval_slots(1), b = sa->eval_slots(3);
  CHECK(torch::equal(a[0], b[2]));
  CHECK(torch::equal(a, sa->eval_slots(1)));
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) CHECK_FALSE(torch::equal(a[0][i], a[0][j]));
  }
  CHECK_FALSE(torch::equal(a, sa->eval_slots(1, 99)));
}

TEST_CASE("identical initial slots stay identical through the updates") {
  torch::manual_seed(4);
  SlotAttention sa(8, 8, 4, 16, 1e-8);
  auto features = torch::randn({2, 30, 8});
  auto slots = torch::randn({2, 1, 8}).expand({2, 4, 8}).contiguous();
  const auto s = sa->iterate(features, slots, 3);
  for (int k = 1; k < 4; ++k) CHECK(torch::allclose(s.slots.select(1, 0), s.slots.select(1, k)));
  CHECK_THROWS_AS(sa->iterate(features, slots, 0), InputError);
}

TEST_CASE("training draws fresh slot noise, eval does not") {
  torch::manual_seed(5);
  SlotAttentionModel m(tiny());
  auto x = torch::rand({1, 3, 16, 16});
  m->train();
  const auto a = m->decompose(x), b = m->decompose(x);
  CHECK_FALSE(torch::equal(a.latents, b.latents));
  m->eval();
  CHECK(torch::equal(m->decompose(x).latents, m->decompose(x).latents));
}

TEST_CASE("wrong input resolution and bad configurations are rejected") {
  SlotAttentionModel m(tiny());
  CHECK_THROWS_AS(m->decompose(torch::rand({1, 3, 8, 8})), ShapeError);
  auto c = tiny();
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.conv_kernel = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_encoder_kind("transformer"), ConfigError);
  CHECK(parse_encoder_kind(encoder_kind_name(EncoderKind::kResidual)) == EncoderKind::kResidual);
}
