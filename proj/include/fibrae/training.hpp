#pragma once

// Losses, Adam, and the per-batch FAE updates run in the order
// reconstruction -> condition adversarial -> condition fitting -> GAN.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fibrae/autodiff.hpp"
#include "fibrae/dataset.hpp"
#include "fibrae/nn.hpp"

namespace fibrae::training {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam descent step in place: p -= rate * m_hat/(sqrt(v_hat)+eps).
// Ascent is a descent step on the negated gradient.
void adam_step(AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads, double rate);

// (1/N) sum_i ||X_i - Xhat_i||^2 over an N x D batch.
ad::Var mse_loss(ad::Var x, ad::Var x_hat);
double mse_loss(const Tensor& x, const Tensor& x_hat);

// Mean over the batch of -log softmax(logits)[c_i]; logits is N x K.
ad::Var cross_entropy(ad::Var logits, std::span<const std::size_t> c);
double cross_entropy(std::span<const double> logits, std::size_t c);

struct Batch {
  Tensor x;                    // N x D
  std::vector<std::size_t> c;  // N
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows);

enum class Objective { kReconstruction, kAdversarial, kFitting, kGan };
std::string_view objective_name(Objective o);

// Adam states, one per (objective, parameter group).
class Optimizers {
 public:
  AdamState& state(Objective o, nn::Group g) { return states_[{o, g}]; }

 private:
  std::map<std::pair<Objective, nn::Group>, AdamState> states_;
};

// Each update returns the objective value evaluated before its step.
double reconstruction_update(nn::FAEModel& model, const Batch& batch,
                             double mu_mse, Optimizers& opt);
double cond_adv_update(nn::FAEModel& model, const Batch& batch, double mu_ac1,
                       double mu_ac2, Optimizers& opt);
// Returns the reconstruction cross-entropy term.
double cond_fitting_update(nn::FAEModel& model, const Batch& batch,
                           double mu_c1, double mu_c2, Optimizers& opt);
// Returns the discriminator objective (1/n) sum[log D(x) + log(1 - D(x_hat))].
double gan_update(nn::FAEModel& model, const Batch& batch, double mu_d1,
                  double mu_d2, Optimizers& opt, bool non_saturating = false);

// Plain gradient-descent condition-adversarial step, either with explicit
// sign handling (classifier descends, encoder ascends scaled by lambda) or as
// a single descent pass through a gradient reversal layer.
enum class AdversarialRoute { kExplicit, kGradientReversal };
void cond_adv_sgd_step(nn::FAEModel& model, const Batch& batch, double mu,
                       double lambda, AdversarialRoute route);

// Differentiable helpers shared by the updates.
ad::Var reconstruct(const nn::BoundModel& bm, ad::Tape& tape,
                    const nn::FAEModel& model, const Batch& batch);

struct TrainConfig {
  double mu_mse = 1e-3;
  double mu_ac1 = 1e-4;
  double mu_ac2 = 1e-4;
  double mu_c1 = 1e-4;
  double mu_c2 = 1e-4;
  double mu_d1 = 1e-4;
  double mu_d2 = 1e-4;
  double grl_lambda = 1.0;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool adversarial = true;
  bool fitting = true;
  bool gan = true;
  bool non_saturating = false;

  void validate() const;
};

struct LossRecord {
  std::size_t epoch;
  std::size_t step;
  Objective objective;
  double value;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

TrainResult train(nn::FAEModel& model, const Dataset& data,
                  const TrainConfig& config);

// Mean over samples of the squared reconstruction error.
double dataset_mse(const nn::FAEModel& model, const Dataset& data);

// CSV with columns epoch,step,objective,value.
std::string loss_trace_csv(std::span<const LossRecord> trace);
void write_loss_trace(const std::filesystem::path& path,
                      std::span<const LossRecord> trace);

// Trains a fresh ReLU classifier on (features, labels) and reports its
// accuracy on the held-out pair.
double probe_accuracy(const Tensor& train_x, std::span<const std::size_t> train_c,
                      const Tensor& test_x, std::span<const std::size_t> test_c,
                      std::size_t classes, std::uint64_t seed,
                      std::size_t epochs = 200);

}  // namespace fibrae::training
