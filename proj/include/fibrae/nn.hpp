#pragma once

// Fully-connected building blocks and the fibered auto-encoder assembly:
// encoder (sample -> fiber coordinate f), condition embedding (condition ->
// base coordinate b), skip-connected decoder (f, b -> sample), adversarial
// condition classifier over f, condition classifier and discriminator over
// samples.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fibrae/autodiff.hpp"
#include "fibrae/tensor.hpp"

namespace fibrae::nn {

enum class Activation { kSine, kRelu, kSigmoid, kIdentity };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Tensor weights;  // out x in
  Tensor bias;     // out
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

// Identity on the forward pass; scales the adjoint by -lambda.
struct GradientReversal {
  double lambda = 1.0;
};

ad::Var grl_apply(const GradientReversal& layer, ad::Var x);

struct Architecture {
  std::size_t input_dim = 0;    // D
  std::size_t fiber_dim = 0;    // m
  std::size_t base_dim = 0;     // n
  std::size_t conditions = 0;   // K
  std::vector<std::size_t> encoder_hidden{32, 32};
  std::vector<std::size_t> decoder_hidden{32, 32};
  std::vector<std::size_t> adversary_hidden{32};
  std::vector<std::size_t> classifier_hidden{32};
  std::vector<std::size_t> discriminator_hidden{32};
  double omega0 = 1.0;
  bool decoder_skips = true;
  Activation decoder_output = Activation::kSigmoid;
  // Dense condition id -> original label; empty means ids are the labels.
  std::vector<std::string> condition_names;

  std::size_t latent_dim() const { return fiber_dim + base_dim; }
  void validate() const;
};

enum class Group {
  kEncoder,
  kEmbedding,
  kDecoder,
  kAdversary,
  kClassifier,
  kDiscriminator,
};

inline constexpr Group kAllGroups[] = {
    Group::kEncoder,   Group::kEmbedding,  Group::kDecoder,
    Group::kAdversary, Group::kClassifier, Group::kDiscriminator};

std::string_view group_name(Group g);

struct FAEModel {
  Architecture arch;
  std::vector<DenseLayer> encoder;        // theta_e
  Tensor embedding;                       // theta_m, K x n
  std::vector<DenseLayer> decoder;        // theta_d
  std::vector<DenseLayer> adversary;      // theta_ac
  std::vector<DenseLayer> classifier;     // theta_c
  std::vector<DenseLayer> discriminator;  // theta_Delta

  // Tensors of one parameter group in a fixed order (weights, bias per layer).
  std::vector<Tensor*> tensors(Group g);
  std::vector<const Tensor*> tensors(Group g) const;
  std::size_t parameter_count(Group g) const;

  friend bool operator==(const FAEModel& a, const FAEModel& b);
};

// Fully-connected stack with hidden activation `hidden_act` and output
// activation `out_act`, initialized like init_model.
std::vector<DenseLayer> make_mlp(std::size_t in,
                                 const std::vector<std::size_t>& hidden,
                                 std::size_t out, Activation hidden_act,
                                 Activation out_act, std::mt19937_64& rng,
                                 double first_scale = 1.0);

// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), first encoder layer scaled by
// omega0, biases zero, embedding rows ~ N(0, 0.1). Deterministic in `seed`.
FAEModel init_model(const Architecture& arch, std::uint64_t seed);

// ---- tape-level forward passes ---------------------------------------------

struct LayerVars {
  ad::Var weights;
  ad::Var bias;
  Activation activation;
};

using BoundLayers = std::vector<LayerVars>;

BoundLayers bind_layers(ad::Tape& tape, const std::vector<DenseLayer>& layers,
                        bool trainable);
ad::Var apply_activation(Activation a, ad::Var x);
ad::Var apply_layers(const BoundLayers& layers, ad::Var input);
// Every layer after the first sees concat(previous hidden, f, b) when skips
// are enabled; the first layer sees concat(f, b).
ad::Var apply_decoder(const BoundLayers& layers, ad::Var f, ad::Var b,
                      bool skips);

// Model parameters placed on a tape; groups listed in `trainable` become
// gradient-tracked leaves, the rest constants.
struct BoundModel {
  BoundLayers encoder;
  ad::Var embedding;
  BoundLayers decoder;
  BoundLayers adversary;
  BoundLayers classifier;
  BoundLayers discriminator;

  std::vector<ad::Var> vars(Group g) const;
};

BoundModel bind_model(ad::Tape& tape, const FAEModel& model,
                      std::initializer_list<Group> trainable);

// One-hot rows (N x K) for a batch of condition ids; throws on id >= K.
Tensor one_hot(std::span<const std::size_t> ids, std::size_t classes);

// ---- value-level API ----------------------------------------------------

std::vector<double> encode(const FAEModel& model, std::span<const double> x);
std::vector<double> embed(const FAEModel& model, std::size_t condition);
// f is clamped to [-1, 1] (with a warning) before decoding.
std::vector<double> decode(const FAEModel& model, std::span<const double> f,
                           std::span<const double> b);
std::vector<double> classifier_logits(const std::vector<DenseLayer>& layers,
                                      std::span<const double> input);
double discriminator_prob(const std::vector<DenseLayer>& layers,
                          std::span<const double> x);

// Batched encode of an N x D matrix into N x m fiber coordinates.
Tensor encode_batch(const FAEModel& model, const Tensor& x);

}  // namespace fibrae::nn
