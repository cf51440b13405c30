#include <doctest.h>

#include <cmath>
#include <random>

#include "fibrae/data_io.hpp"
#include "fibrae/training.hpp"
#include "testing.hpp"

using namespace fibrae;
using namespace fibrae::training;
using nn::Group;

namespace {

nn::Architecture small_arch(std::size_t d = 6, std::size_t k = 3) {
  nn::Architecture a;
  a.input_dim = d;
  a.fiber_dim = 2;
  a.base_dim = 2;
  a.conditions = k;
  a.encoder_hidden = {8};
  a.decoder_hidden = {8};
  a.adversary_hidden = {8};
  a.classifier_hidden = {8};
  a.discriminator_hidden = {8};
  return a;
}

Batch random_batch(std::size_t n, std::size_t d, std::size_t k, std::mt19937_64& rng) {
  Batch b{testing::random_tensor({n, d}, rng, 0.0, 1.0), {}};
  for (std::size_t i = 0; i < n; ++i) b.c.push_back(rng() % k);
  return b;
}

// Serialized bytes of one parameter group.
std::vector<double> group_values(const nn::FAEModel& m, Group g) {
  std::vector<double> out;
  for (const Tensor* t : m.tensors(g)) out.insert(out.end(), t->values().begin(), t->values().end());
  return out;
}

void check_untouched(const nn::FAEModel& before, const nn::FAEModel& after,
                     std::initializer_list<Group> changed) {
  for (Group g : nn::kAllGroups) {
    const bool expect_change = std::find(changed.begin(), changed.end(), g) != changed.end();
    INFO("group ", nn::group_name(g));
    if (expect_change) {
      CHECK(group_values(before, g) != group_values(after, g));
    } else {
      CHECK(group_values(before, g) == group_values(after, g));
    }
  }
}

}  // namespace

TEST_CASE("losses") {
  Tensor x(Shape{1, 2}, {1.0, 1.0}), zero(Shape{1, 2}, 0.0);
  CHECK(mse_loss(x, x) == 0.0);
  CHECK(mse_loss(x, zero) == 2.0);
  std::mt19937_64 rng(1);
  const Tensor a = testing::random_tensor({5, 3}, rng), b = testing::random_tensor({5, 3}, rng);
  Tensor b2 = a;
  for (std::size_t i = 0; i < a.size(); ++i) b2[i] = a[i] + 2.0 * (b[i] - a[i]);
  CHECK(mse_loss(a, b2) == doctest::Approx(4.0 * mse_loss(a, b)).epsilon(1e-12));
  CHECK_THROWS(mse_loss(a, zero));

  CHECK(cross_entropy(std::vector{0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double tiny = cross_entropy(std::vector{10.0, -10.0}, 0);
  CHECK(tiny == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(tiny == doctest::Approx(2.061e-9).epsilon(1e-3));
  const std::vector<double> l{0.3, -1.2, 2.5};
  for (double kappa : {-50.0, 3.0, 700.0}) {
    std::vector<double> shifted = l;
    for (double& v : shifted) v += kappa;
    CHECK(std::abs(cross_entropy(shifted, 2) - cross_entropy(l, 2)) < 1e-12);
  }
  CHECK_THROWS_AS(cross_entropy(l, 3), std::out_of_range);
}

TEST_CASE("adam") {
  Tensor p(Shape{3}, {1.0, -2.0, 0.5});
  const Tensor orig = p;
  std::vector<Tensor*> params{&p};
  AdamState s;
  adam_step(s, params, std::vector{Tensor(Shape{3}, 0.0)}, 1e-3);
  CHECK(p == orig);
  CHECK(s.t == 1);

  AdamState fresh;
  adam_step(fresh, params, std::vector{Tensor(Shape{3}, {0.5, -3.0, 1e-3})}, 1e-3);
  CHECK(p[0] - orig[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(p[1] - orig[1] == doctest::Approx(1e-3).epsilon(1e-4));
  CHECK(p[2] - orig[2] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK_THROWS(adam_step(fresh, params, std::vector{Tensor(Shape{2}, 0.0)}, 1e-3));

  auto run = [] {
    Tensor q(Shape{2}, {0.1, 0.2});
    std::vector<Tensor*> ps{&q};
    AdamState st;
    for (int i = 0; i < 20; ++i) adam_step(st, ps, std::vector{Tensor(Shape{2}, {q[0], -q[1]})}, 1e-2);
    return q;
  };
  CHECK(run() == run());
}

TEST_CASE("updates touch only their parameter groups") {
  std::mt19937_64 rng(3);
  const auto model = nn::init_model(small_arch(), 4);
  const Batch batch = random_batch(10, 6, 3, rng);
  Optimizers opt;

  auto m = model;
  reconstruction_update(m, batch, 1e-3, opt);
  check_untouched(model, m, {Group::kEncoder, Group::kEmbedding, Group::kDecoder});

  m = model;
  cond_adv_update(m, batch, 1e-3, 1e-3, opt);
  check_untouched(model, m, {Group::kAdversary, Group::kEncoder});

  m = model;
  cond_fitting_update(m, batch, 1e-3, 1e-3, opt);
  check_untouched(model, m, {Group::kClassifier, Group::kDecoder, Group::kEmbedding});

  m = model;
  gan_update(m, batch, 1e-3, 1e-3, opt);
  check_untouched(model, m,
                  {Group::kDiscriminator, Group::kEncoder, Group::kEmbedding, Group::kDecoder});

  m = model;
  Optimizers idle;
  reconstruction_update(m, batch, 0.0, idle);
  cond_adv_update(m, batch, 0.0, 0.0, idle);
  cond_fitting_update(m, batch, 0.0, 0.0, idle);
  gan_update(m, batch, 0.0, 0.0, idle);
  CHECK(m == model);
}

TEST_CASE("single steps move their objectives the right way") {
  int recon_ok = 0, adv_ok = 0, fit_ok = 0, disc_ok = 0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(seed);
    const auto model = nn::init_model(small_arch(), static_cast<std::uint64_t>(seed));
    const Batch one = random_batch(1, 6, 3, rng);
    const Batch batch = random_batch(16, 6, 3, rng);
    Optimizers opt, idle;

    auto m = model;
    const double before = reconstruction_update(m, one, 1e-4, opt);
    recon_ok += reconstruction_update(m, one, 0.0, idle) <= before;

    m = model;
    const double adv = cond_adv_update(m, batch, 1e-4, 0.0, opt);
    adv_ok += cond_adv_update(m, batch, 0.0, 0.0, idle) <= adv;

    m = model;
    const double fit = cond_fitting_update(m, batch, 0.0, 1e-4, opt);
    fit_ok += cond_fitting_update(m, batch, 0.0, 0.0, idle) <= fit;

    m = model;
    const double disc = gan_update(m, batch, 1e-4, 0.0, opt);
    disc_ok += gan_update(m, batch, 0.0, 0.0, idle) >= disc;
  }
  CHECK(recon_ok == seeds);
  CHECK(adv_ok == seeds);
  CHECK(fit_ok == seeds);
  CHECK(disc_ok == seeds);
}

TEST_CASE("constant discriminator") {
  std::mt19937_64 rng(5);
  auto model = nn::init_model(small_arch(), 1);
  auto& last = model.discriminator.back();
  for (double& v : last.weights.values()) v = 0.0;
  for (double& v : last.bias.values()) v = 0.0;
  Optimizers idle;
  const double obj = gan_update(model, random_batch(7, 6, 3, rng), 0.0, 0.0, idle);
  CHECK(obj == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-14));
}

TEST_CASE("gradient reversal route equals the explicit adversarial update") {
  std::mt19937_64 rng(9);
  const Batch batch = random_batch(12, 6, 3, rng);
  for (double lambda : {1.0, 0.35}) {
    auto a = nn::init_model(small_arch(), 2);
    auto b = a;
    for (int step = 0; step < 100; ++step) {
      cond_adv_sgd_step(a, batch, 1e-2, lambda, AdversarialRoute::kExplicit);
      cond_adv_sgd_step(b, batch, 1e-2, lambda, AdversarialRoute::kGradientReversal);
    }
    double worst = 0.0;
    for (Group g : nn::kAllGroups) {
      const auto va = group_values(a, g), vb = group_values(b, g);
      for (std::size_t i = 0; i < va.size(); ++i) worst = std::max(worst, std::abs(va[i] - vb[i]));
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("train") {
  data_io::SyntheticSpec spec;
  spec.conditions = 2;
  spec.per_condition = 100;
  spec.dim = 8;
  spec.seed = 3;
  const Dataset data = data_io::make_synthetic(spec);
  auto arch = small_arch(8, 2);
  arch.encoder_hidden = {32, 32};
  arch.decoder_hidden = {32, 32};
  const auto model = nn::init_model(arch, 7);

  TrainConfig cfg;
  cfg.epochs = 0;
  auto untouched = model;
  train(untouched, data, cfg);
  CHECK(untouched == model);

  cfg.epochs = 200;
  cfg.batch_size = 32;
  auto a = model, b = model;
  const auto ra = train(a, data, cfg);
  const auto rb = train(b, data, cfg);
  CHECK(a == b);
  CHECK(ra.final_mse < 0.1 * ra.initial_mse);
  for (const auto& rec : ra.trace) CHECK(std::isfinite(rec.value));
  CHECK(loss_trace_csv(ra.trace) == loss_trace_csv(rb.trace));
  CHECK(loss_trace_csv(ra.trace).rfind("epoch,step,objective,value\n", 0) == 0);

  cfg.mu_mse = 0.0;
  CHECK_THROWS(train(a, data, cfg));
}
