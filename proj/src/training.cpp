#include "fibrae/training.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fibrae/io_util.hpp"

namespace fibrae::training {

void adam_step(AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads, double rate) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) +
                     " parameters but " + std::to_string(grads.size()) +
                     " gradients");
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks a different parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !state.m[i].same_shape(grads[i])) {
      throw ShapeError("adam_step: gradient shape " +
                       shape_string(grads[i].shape()) + " vs parameter " +
                       shape_string(params[i]->shape()));
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

ad::Var mse_loss(ad::Var x, ad::Var x_hat) {
  if (!x.value().same_shape(x_hat.value())) {
    throw ShapeError("mse_loss: shapes " + shape_string(x.shape()) + " and " +
                     shape_string(x_hat.shape()));
  }
  const double n = static_cast<double>(x.value().rows());
  return ad::scale(ad::squared_norm(x - x_hat), 1.0 / n);
}

double mse_loss(const Tensor& x, const Tensor& x_hat) {
  ad::Tape tape;
  return mse_loss(tape.constant(x), tape.constant(x_hat)).value().item();
}

ad::Var cross_entropy(ad::Var logits, std::span<const std::size_t> c) {
  const Tensor& l = logits.value();
  if (l.rows() != c.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(c.size()) +
                     " labels for logits " + shape_string(l.shape()));
  }
  auto mask = logits.tape->constant(nn::one_hot(c, l.cols()));
  auto picked = ad::sum(ad::mul(ad::log_softmax(logits), mask));
  return ad::scale(picked, -1.0 / static_cast<double>(c.size()));
}

double cross_entropy(std::span<const double> logits, std::size_t c) {
  if (c >= logits.size()) {
    throw std::out_of_range("condition id " + std::to_string(c) +
                            " out of range for K=" + std::to_string(logits.size()));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return mx + std::log(s) - logits[c];
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t d = data.dim();
  Batch b{Tensor(Shape{rows.size(), d}), {}};
  b.c.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(data.x.values().begin() + static_cast<std::ptrdiff_t>(rows[i] * d),
                d, b.x.values().begin() + static_cast<std::ptrdiff_t>(i * d));
    b.c.push_back(data.c[rows[i]]);
  }
  return b;
}

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::kReconstruction: return "reconstruction";
    case Objective::kAdversarial: return "condition_adversarial";
    case Objective::kFitting: return "condition_fitting";
    case Objective::kGan: return "gan";
  }
  return "?";
}

namespace {

void require_rate(double mu, std::string_view name) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument(std::string(name) + " must be a finite rate >= 0");
  }
}

void require_finite(double v, std::string_view what) {
  if (!std::isfinite(v)) {
    throw NumericalError(fmt::format("non-finite {} loss ({})", what, v));
  }
}

// Adam step on one parameter group from gradients collected on a tape.
void step_group(nn::FAEModel& model, nn::Group g, const nn::BoundModel& bm,
                const ad::Gradients& grads, double rate, AdamState& state,
                bool ascent = false) {
  if (rate == 0.0) return;
  auto params = model.tensors(g);
  std::vector<Tensor> gs;
  for (const ad::Var& v : bm.vars(g)) {
    Tensor gt = grads[v];
    if (ascent) {
      for (double& x : gt.values()) x = -x;
    }
    gs.push_back(std::move(gt));
  }
  adam_step(state, params, gs, rate);
}

ad::Var encode_on(const nn::BoundModel& bm, ad::Var x) {
  return nn::apply_layers(bm.encoder, x);
}

}  // namespace

ad::Var reconstruct(const nn::BoundModel& bm, ad::Tape& tape,
                    const nn::FAEModel& model, const Batch& batch) {
  auto x = tape.constant(batch.x);
  auto f = encode_on(bm, x);
  auto b = ad::matmul(tape.constant(nn::one_hot(batch.c, model.arch.conditions)),
                      bm.embedding);
  return nn::apply_decoder(bm.decoder, f, b, model.arch.decoder_skips);
}

double reconstruction_update(nn::FAEModel& model, const Batch& batch,
                             double mu_mse, Optimizers& opt) {
  require_rate(mu_mse, "mu_mse");
  using nn::Group;
  ad::Tape tape;
  auto bm = nn::bind_model(tape, model,
                           {Group::kEncoder, Group::kEmbedding, Group::kDecoder});
  auto loss = mse_loss(tape.constant(batch.x), reconstruct(bm, tape, model, batch));
  const double value = loss.value().item();
  require_finite(value, "reconstruction");
  if (mu_mse == 0.0) return value;
  auto grads = tape.backward(loss);
  for (Group g : {Group::kEncoder, Group::kEmbedding, Group::kDecoder}) {
    step_group(model, g, bm, grads, mu_mse,
               opt.state(Objective::kReconstruction, g));
  }
  return value;
}

double cond_adv_update(nn::FAEModel& model, const Batch& batch, double mu_ac1,
                       double mu_ac2, Optimizers& opt) {
  require_rate(mu_ac1, "mu_ac1");
  require_rate(mu_ac2, "mu_ac2");
  using nn::Group;
  ad::Tape tape;
  auto bm = nn::bind_model(tape, model, {Group::kEncoder, Group::kAdversary});
  auto f = encode_on(bm, tape.constant(batch.x));
  auto loss = cross_entropy(nn::apply_layers(bm.adversary, f), batch.c);
  const double value = loss.value().item();
  require_finite(value, "condition adversarial");
  if (mu_ac1 == 0.0 && mu_ac2 == 0.0) return value;
  auto grads = tape.backward(loss);
  step_group(model, Group::kAdversary, bm, grads, mu_ac1,
             opt.state(Objective::kAdversarial, Group::kAdversary));
  step_group(model, Group::kEncoder, bm, grads, mu_ac2,
             opt.state(Objective::kAdversarial, Group::kEncoder),
             /*ascent=*/true);
  return value;
}

double cond_fitting_update(nn::FAEModel& model, const Batch& batch,
                           double mu_c1, double mu_c2, Optimizers& opt) {
  require_rate(mu_c1, "mu_c1");
  require_rate(mu_c2, "mu_c2");
  using nn::Group;
  {
    ad::Tape tape;
    auto bm = nn::bind_model(tape, model, {Group::kClassifier});
    auto loss = cross_entropy(
        nn::apply_layers(bm.classifier, tape.constant(batch.x)), batch.c);
    require_finite(loss.value().item(), "condition classifier");
    if (mu_c1 != 0.0) {
      step_group(model, Group::kClassifier, bm, tape.backward(loss), mu_c1,
                 opt.state(Objective::kFitting, Group::kClassifier));
    }
  }
  ad::Tape tape;
  auto bm = nn::bind_model(tape, model, {Group::kDecoder, Group::kEmbedding});
  auto x_hat = reconstruct(bm, tape, model, batch);
  auto loss = cross_entropy(nn::apply_layers(bm.classifier, x_hat), batch.c);
  const double value = loss.value().item();
  require_finite(value, "condition fitting");
  if (mu_c2 != 0.0) {
    auto grads = tape.backward(loss);
    step_group(model, Group::kDecoder, bm, grads, mu_c2,
               opt.state(Objective::kFitting, Group::kDecoder));
    step_group(model, Group::kEmbedding, bm, grads, mu_c2,
               opt.state(Objective::kFitting, Group::kEmbedding));
  }
  return value;
}

double gan_update(nn::FAEModel& model, const Batch& batch, double mu_d1,
                  double mu_d2, Optimizers& opt, bool non_saturating) {
  require_rate(mu_d1, "mu_d1");
  require_rate(mu_d2, "mu_d2");
  using nn::Group;
  const double inv_n = 1.0 / static_cast<double>(batch.c.size());
  double objective = 0.0;
  {
    ad::Tape tape;
    auto bm = nn::bind_model(tape, model, {Group::kDiscriminator});
    auto x_hat = reconstruct(bm, tape, model, batch);
    auto real = nn::apply_layers(bm.discriminator, tape.constant(batch.x));
    auto fake = nn::apply_layers(bm.discriminator, x_hat);
    // log D(x) + log(1 - D(x_hat)), with 1 - sigmoid(z) = sigmoid(-z)
    auto obj = ad::scale(ad::sum(ad::log_sigmoid(real)) +
                             ad::sum(ad::log_sigmoid(ad::scale(fake, -1.0))),
                         inv_n);
    objective = obj.value().item();
    require_finite(objective, "discriminator");
    if (mu_d1 != 0.0) {
      step_group(model, Group::kDiscriminator, bm, tape.backward(obj), mu_d1,
                 opt.state(Objective::kGan, Group::kDiscriminator),
                 /*ascent=*/true);
    }
  }
  if (mu_d2 == 0.0) return objective;
  ad::Tape tape;
  auto bm = nn::bind_model(tape, model,
                           {Group::kEncoder, Group::kEmbedding, Group::kDecoder});
  auto fake = nn::apply_layers(bm.discriminator, reconstruct(bm, tape, model, batch));
  auto gen = non_saturating
                 ? ad::scale(ad::sum(ad::log_sigmoid(fake)), -inv_n)
                 : ad::scale(ad::sum(ad::log_sigmoid(ad::scale(fake, -1.0))), inv_n);
  require_finite(gen.value().item(), "generator");
  auto grads = tape.backward(gen);
  for (Group g : {Group::kEncoder, Group::kEmbedding, Group::kDecoder}) {
    step_group(model, g, bm, grads, mu_d2, opt.state(Objective::kGan, g));
  }
  return objective;
}

void cond_adv_sgd_step(nn::FAEModel& model, const Batch& batch, double mu,
                       double lambda, AdversarialRoute route) {
  using nn::Group;
  ad::Tape tape;
  auto bm = nn::bind_model(tape, model, {Group::kEncoder, Group::kAdversary});
  auto f = encode_on(bm, tape.constant(batch.x));
  if (route == AdversarialRoute::kGradientReversal) {
    f = nn::grl_apply({.lambda = lambda}, f);
  }
  auto loss = cross_entropy(nn::apply_layers(bm.adversary, f), batch.c);
  auto grads = tape.backward(loss);

  auto apply = [&](Group g, double factor) {
    auto params = model.tensors(g);
    auto vars = bm.vars(g);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor gt = grads[vars[i]];
      auto p = params[i]->values();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= factor * gt[k];
    }
  };
  apply(Group::kAdversary, mu);
  if (route == AdversarialRoute::kGradientReversal) {
    apply(Group::kEncoder, mu);
  } else {
    // encoder ascends the classifier loss, scaled by lambda
    apply(Group::kEncoder, -mu * lambda);
  }
}

void TrainConfig::validate() const {
  auto positive = [](double v, std::string_view name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be > 0");
    }
  };
  positive(mu_mse, "mu_mse");
  if (adversarial) {
    positive(mu_ac1, "mu_ac1");
    positive(mu_ac2, "mu_ac2");
  }
  if (fitting) {
    positive(mu_c1, "mu_c1");
    positive(mu_c2, "mu_c2");
  }
  if (gan) {
    positive(mu_d1, "mu_d1");
    positive(mu_d2, "mu_d2");
  }
  if (!(grl_lambda >= 0.0)) throw std::invalid_argument("grl_lambda must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
}

double dataset_mse(const nn::FAEModel& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const Batch batch = make_batch(data, all);
  ad::Tape tape;
  auto bm = nn::bind_model(tape, model, {});
  return mse_loss(tape.constant(batch.x), reconstruct(bm, tape, model, batch))
      .value()
      .item();
}

TrainResult train(nn::FAEModel& model, const Dataset& data,
                  const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.dim() != model.arch.input_dim || data.conditions > model.arch.conditions) {
    throw std::invalid_argument(fmt::format(
        "train: dataset (D={}, K={}) does not fit model (D={}, K={})",
        data.dim(), data.conditions, model.arch.input_dim, model.arch.conditions));
  }
  data.validate();

  TrainResult result;
  result.initial_mse = dataset_mse(model, data);
  std::mt19937_64 rng(config.seed);
  Optimizers opt;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const Batch batch =
          make_batch(data, std::span(order).subspan(start, end - start));
      auto log = [&](Objective o, double v) {
        result.trace.push_back({epoch, step, o, v});
      };
      try {
        log(Objective::kReconstruction,
            reconstruction_update(model, batch, config.mu_mse, opt));
        if (config.adversarial) {
          log(Objective::kAdversarial,
              cond_adv_update(model, batch, config.mu_ac1, config.mu_ac2, opt));
        }
        if (config.fitting) {
          log(Objective::kFitting,
              cond_fitting_update(model, batch, config.mu_c1, config.mu_c2, opt));
        }
        if (config.gan) {
          log(Objective::kGan, gan_update(model, batch, config.mu_d1,
                                          config.mu_d2, opt, config.non_saturating));
        }
      } catch (const NumericalError& e) {
        throw NumericalError(
            fmt::format("{} (epoch {}, step {})", e.what(), epoch, step));
      }
      ++step;
    }
    spdlog::debug("epoch {}: reconstruction {}", epoch,
                  result.trace.empty() ? 0.0 : result.trace.back().value);
  }
  result.final_mse = dataset_mse(model, data);
  return result;
}

std::string loss_trace_csv(std::span<const LossRecord> trace) {
  std::string out = "epoch,step,objective,value\n";
  for (const auto& r : trace) {
    out += fmt::format("{},{},{},{}\n", r.epoch, r.step,
                       objective_name(r.objective), r.value);
  }
  return out;
}

void write_loss_trace(const std::filesystem::path& path,
                      std::span<const LossRecord> trace) {
  write_file_atomic(path, loss_trace_csv(trace));
}

double probe_accuracy(const Tensor& train_x, std::span<const std::size_t> train_c,
                      const Tensor& test_x, std::span<const std::size_t> test_c,
                      std::size_t classes, std::uint64_t seed,
                      std::size_t epochs) {
  std::mt19937_64 rng(seed);
  auto layers = nn::make_mlp(train_x.cols(), {32, 32}, classes,
                             nn::Activation::kRelu, nn::Activation::kIdentity, rng);
  AdamState state;
  for (std::size_t e = 0; e < epochs; ++e) {
    ad::Tape tape;
    auto bound = nn::bind_layers(tape, layers, true);
    auto loss = cross_entropy(nn::apply_layers(bound, tape.constant(train_x)),
                              train_c);
    auto grads = tape.backward(loss);
    std::vector<Tensor*> params;
    std::vector<Tensor> gs;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      params.push_back(&layers[i].weights);
      params.push_back(&layers[i].bias);
      gs.push_back(grads[bound[i].weights]);
      gs.push_back(grads[bound[i].bias]);
    }
    adam_step(state, params, gs, 1e-2);
  }
  ad::Tape tape;
  auto logits =
      nn::apply_layers(nn::bind_layers(tape, layers, false), tape.constant(test_x))
          .value();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test_c.size(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == test_c[i];
  }
  return static_cast<double>(hits) / static_cast<double>(test_c.size());
}

}  // namespace fibrae::training
