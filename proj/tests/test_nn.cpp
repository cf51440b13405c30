#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fibrae/nn.hpp"
#include "testing.hpp"

using namespace fibrae;
using fibrae::testing::random_tensor;
using fibrae::testing::rel_error;

namespace {

nn::Architecture small_arch() {
  nn::Architecture a;
  a.input_dim = 6;
  a.fiber_dim = 2;
  a.base_dim = 2;
  a.conditions = 3;
  a.encoder_hidden = {8};
  a.decoder_hidden = {8, 8};
  a.adversary_hidden = {5};
  a.classifier_hidden = {5};
  a.discriminator_hidden = {5};
  return a;
}

bool bytes_equal(const nn::FAEModel& a, const nn::FAEModel& b) {
  for (auto g : nn::kAllGroups) {
    auto ta = a.tensors(g);
    auto tb = b.tensors(g);
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      if (ta[i]->size() != tb[i]->size()) return false;
      if (std::memcmp(ta[i]->values().data(), tb[i]->values().data(),
                      ta[i]->size() * sizeof(double)) != 0)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("encode: range, zero weights and determinism") {
  auto model = nn::init_model(small_arch(), 1);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    auto x = random_tensor({6}, rng, -20.0, 20.0);
    for (double f : nn::encode(model, x.values())) {
      CHECK(f >= -1.0);
      CHECK(f <= 1.0);
    }
  }
  auto x = random_tensor({6}, rng, 0.0, 1.0);
  CHECK(nn::encode(model, x.values()) == nn::encode(model, x.values()));

  // single zero-weight layer with bias beta
  auto zero = model;
  zero.encoder.resize(1);
  zero.encoder[0].weights = Tensor(Shape{2, 6}, 0.0);
  zero.encoder[0].bias = Tensor::vector({0.4, -1.3});
  auto f = nn::encode(zero, x.values());
  CHECK(f[0] == std::sin(0.4));
  CHECK(f[1] == std::sin(-1.3));

  CHECK_THROWS_AS(nn::encode(model, std::vector<double>(5, 0.0)), ShapeError);
}

TEST_CASE("embed: table lookup") {
  auto model = nn::init_model(small_arch(), 1);
  model.embedding(0, 0) = 0.1;
  model.embedding(0, 1) = -0.2;
  auto b = nn::embed(model, 0);
  CHECK(b == std::vector<double>{0.1, -0.2});
  CHECK(nn::embed(model, 1) != nn::embed(model, 2));
  CHECK_THROWS_AS(nn::embed(model, 3), std::out_of_range);
}

TEST_CASE("decode: deterministic, sigmoid range, constructed identity layer") {
  auto model = nn::init_model(small_arch(), 2);
  std::vector<double> f{0.3, -0.7}, b{0.05, 0.2};
  auto x1 = nn::decode(model, f, b);
  CHECK(x1 == nn::decode(model, f, b));
  for (double v : x1) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  auto arch = small_arch();
  arch.input_dim = 4;
  arch.decoder_hidden = {};
  arch.decoder_skips = false;
  auto plain = nn::init_model(arch, 3);
  plain.decoder[0].weights = Tensor::identity(4);
  plain.decoder[0].bias = Tensor(Shape{4}, 0.0);
  auto out = nn::decode(plain, f, b);
  const double z[] = {0.3, -0.7, 0.05, 0.2};
  for (int i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(1 / (1 + std::exp(-z[i]))));

  // out-of-cube fibers decode as their clamped projection
  std::vector<double> outside{1.7, -0.7};
  std::vector<double> clamped{1.0, -0.7};
  CHECK(nn::decode(model, outside, b) == nn::decode(model, clamped, b));
  CHECK_THROWS_AS(nn::decode(model, std::vector<double>{0.1}, b), ShapeError);
}

TEST_CASE("decode: autodiff Jacobian matches finite differences") {
  auto model = nn::init_model(small_arch(), 4);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto z = random_tensor({4}, rng, -0.9, 0.9);
    ad::Tape tape;
    auto zv = tape.parameter(z);
    auto layers = nn::bind_layers(tape, model.decoder, false);
    auto out = nn::apply_decoder(layers, ad::slice(zv, 0, 0, 2),
                                 ad::slice(zv, 0, 2, 4), true);
    for (std::size_t i = 0; i < model.arch.input_dim; ++i) {
      Tensor e(Shape{model.arch.input_dim}, 0.0);
      e[i] = 1.0;
      auto row = tape.backward(out, e)[zv];
      auto fd = ad::finite_difference_gradient(
          [&](std::span<const double> p) {
            return nn::decode(model, p.subspan(0, 2), p.subspan(2, 2))[i];
          },
          z.values(), 1e-5);
      CHECK(rel_error(row.values(), fd) < 1e-6);
    }
  }
}

TEST_CASE("grl_apply: identity forward, reversed and scaled backward") {
  ad::Tape tape;
  auto x = tape.parameter(Tensor::vector({1.5, -2.0}));
  auto y = nn::grl_apply({.lambda = 2.0}, x);
  CHECK(y.value()[0] == 1.5);
  CHECK(y.value()[1] == -2.0);
  auto g = tape.backward(y, Tensor::vector({1, 1}))[x];
  CHECK(g == Tensor::vector({-2, -2}));

  ad::Tape t0;
  auto x0 = t0.parameter(Tensor::vector({1.5, -2.0}));
  auto g0 = t0.backward(nn::grl_apply({.lambda = 0.0}, x0),
                        Tensor::vector({1, 1}))[x0];
  for (double v : g0.values()) CHECK(v == 0.0);
}

TEST_CASE("classifier_logits and discriminator_prob") {
  nn::DenseLayer id{Tensor::identity(3), Tensor(Shape{3}, 0.0),
                    nn::Activation::kIdentity};
  std::vector<double> in{0.2, -1.0, 3.0};
  CHECK(nn::classifier_logits({id}, in) == in);
  CHECK_THROWS_AS(nn::classifier_logits({id}, std::vector<double>{1, 2}),
                  ShapeError);

  auto model = nn::init_model(small_arch(), 5);
  auto disc = model.discriminator;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    auto x = random_tensor({6}, rng, -50, 50);
    double p = nn::discriminator_prob(disc, x.values());
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p == nn::discriminator_prob(disc, x.values()));
  }
  disc.back().weights = Tensor(disc.back().weights.shape(), 0.0);
  disc.back().bias = Tensor(Shape{1}, 0.0);
  CHECK(nn::discriminator_prob(disc, random_tensor({6}, rng).values()) == 0.5);
}

TEST_CASE("init_model: determinism and uniform support") {
  auto a = nn::init_model(small_arch(), 42);
  auto b = nn::init_model(small_arch(), 42);
  auto c = nn::init_model(small_arch(), 43);
  CHECK(bytes_equal(a, b));
  CHECK_FALSE(bytes_equal(a, c));

  for (auto g : {nn::Group::kEncoder, nn::Group::kDecoder,
                 nn::Group::kAdversary, nn::Group::kClassifier,
                 nn::Group::kDiscriminator}) {
    auto tensors = a.tensors(g);
    for (std::size_t i = 0; i < tensors.size(); i += 2) {
      const Tensor& w = *tensors[i];
      const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
      for (double v : w.values()) CHECK(std::abs(v) <= bound);
    }
  }

  auto arch = small_arch();
  arch.omega0 = 30.0;
  auto scaled = nn::init_model(arch, 42);
  CHECK(scaled.encoder[0].weights[0] == doctest::Approx(30.0 * a.encoder[0].weights[0]));

  auto bad = small_arch();
  bad.fiber_dim = 0;
  CHECK_THROWS(nn::init_model(bad, 1));
}

TEST_CASE("model: decoder skip wiring widths") {
  auto model = nn::init_model(small_arch(), 1);
  REQUIRE(model.decoder.size() == 3);
  CHECK(model.decoder[0].in_dim() == 4);
  CHECK(model.decoder[1].in_dim() == 8 + 4);
  CHECK(model.decoder[2].in_dim() == 8 + 4);
  CHECK(model.decoder[2].out_dim() == 6);
  CHECK(model.embedding.shape() == Shape{3, 2});
}
