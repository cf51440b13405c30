#include "fibrae/nn.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <random>

namespace fibrae::nn {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kSine: return "sine";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "sine") return Activation::kSine;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view group_name(Group g) {
  switch (g) {
    case Group::kEncoder: return "encoder";
    case Group::kEmbedding: return "embedding";
    case Group::kDecoder: return "decoder";
    case Group::kAdversary: return "adversary";
    case Group::kClassifier: return "classifier";
    case Group::kDiscriminator: return "discriminator";
  }
  return "?";
}

ad::Var grl_apply(const GradientReversal& layer, ad::Var x) {
  return ad::reverse_grad(x, layer.lambda);
}

void Architecture::validate() const {
  if (input_dim == 0 || fiber_dim == 0 || base_dim == 0 || conditions == 0) {
    throw std::invalid_argument(
        "architecture dimensions (input, fiber, base, conditions) must be positive");
  }
  if (!(omega0 > 0.0)) throw std::invalid_argument("omega0 must be positive");
  if (!condition_names.empty() && condition_names.size() != conditions) {
    throw std::invalid_argument("condition name count does not match K");
  }
}

namespace {

template <typename Layers, typename Out>
void collect(Layers& layers, Out& out) {
  for (auto& l : layers) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
}

template <typename Model, typename Ptr>
std::vector<Ptr> group_tensors(Model& m, Group g) {
  std::vector<Ptr> out;
  switch (g) {
    case Group::kEncoder: collect(m.encoder, out); break;
    case Group::kEmbedding: out.push_back(&m.embedding); break;
    case Group::kDecoder: collect(m.decoder, out); break;
    case Group::kAdversary: collect(m.adversary, out); break;
    case Group::kClassifier: collect(m.classifier, out); break;
    case Group::kDiscriminator: collect(m.discriminator, out); break;
  }
  return out;
}

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act,
                      double weight_scale, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseLayer layer;
  layer.weights = Tensor(Shape{out, in});
  for (double& w : layer.weights.values()) w = weight_scale * dist(rng);
  layer.bias = Tensor(Shape{out}, 0.0);
  layer.activation = act;
  return layer;
}

}  // namespace

std::vector<DenseLayer> make_mlp(std::size_t in,
                                 const std::vector<std::size_t>& hidden,
                                 std::size_t out, Activation hidden_act,
                                 Activation out_act, std::mt19937_64& rng,
                                 double first_scale) {
  std::vector<DenseLayer> layers;
  std::size_t prev = in;
  for (std::size_t h : hidden) {
    layers.push_back(make_layer(prev, h, hidden_act,
                                layers.empty() ? first_scale : 1.0, rng));
    prev = h;
  }
  layers.push_back(
      make_layer(prev, out, out_act, layers.empty() ? first_scale : 1.0, rng));
  return layers;
}

std::vector<Tensor*> FAEModel::tensors(Group g) {
  return group_tensors<FAEModel, Tensor*>(*this, g);
}

std::vector<const Tensor*> FAEModel::tensors(Group g) const {
  return group_tensors<const FAEModel, const Tensor*>(*this, g);
}

std::size_t FAEModel::parameter_count(Group g) const {
  std::size_t n = 0;
  for (const Tensor* t : tensors(g)) n += t->size();
  return n;
}

bool operator==(const FAEModel& a, const FAEModel& b) {
  for (Group g : kAllGroups) {
    auto ta = a.tensors(g);
    auto tb = b.tensors(g);
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      if (!(*ta[i] == *tb[i])) return false;
    }
  }
  return true;
}

FAEModel init_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  FAEModel model;
  model.arch = arch;
  const std::size_t m = arch.fiber_dim, n = arch.base_dim;

  model.encoder = make_mlp(arch.input_dim, arch.encoder_hidden, m,
                           Activation::kSine, Activation::kSine, rng,
                           arch.omega0);

  model.embedding = Tensor(Shape{arch.conditions, n});
  std::normal_distribution<double> normal(0.0, 0.1);
  for (double& v : model.embedding.values()) v = normal(rng);

  // Decoder: layer i > 0 takes concat(H_{i-1}, f, b) when skips are on.
  std::size_t prev = m + n;
  for (std::size_t h : arch.decoder_hidden) {
    model.decoder.push_back(make_layer(prev, h, Activation::kSine, 1.0, rng));
    prev = h + (arch.decoder_skips ? m + n : 0);
  }
  model.decoder.push_back(
      make_layer(prev, arch.input_dim, arch.decoder_output, 1.0, rng));

  model.adversary = make_mlp(m, arch.adversary_hidden, arch.conditions,
                             Activation::kRelu, Activation::kIdentity, rng);
  model.classifier = make_mlp(arch.input_dim, arch.classifier_hidden,
                              arch.conditions, Activation::kRelu,
                              Activation::kIdentity, rng);
  model.discriminator = make_mlp(arch.input_dim, arch.discriminator_hidden, 1,
                                 Activation::kRelu, Activation::kIdentity, rng);
  return model;
}

BoundLayers bind_layers(ad::Tape& tape, const std::vector<DenseLayer>& layers,
                        bool trainable) {
  BoundLayers out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    if (trainable) {
      out.push_back({tape.parameter(l.weights), tape.parameter(l.bias),
                     l.activation});
    } else {
      out.push_back(
          {tape.constant(l.weights), tape.constant(l.bias), l.activation});
    }
  }
  return out;
}

ad::Var apply_activation(Activation a, ad::Var x) {
  switch (a) {
    case Activation::kSine: return ad::sin(x);
    case Activation::kRelu: return ad::relu(x);
    case Activation::kSigmoid: return ad::sigmoid(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

namespace {

ad::Var dense(const LayerVars& layer, ad::Var input) {
  const auto& w = layer.weights.value();
  if (input.value().cols() != w.cols()) {
    throw ShapeError("dense layer expects input width " +
                     std::to_string(w.cols()) + ", got " +
                     shape_string(input.shape()));
  }
  return apply_activation(layer.activation,
                          ad::matmul_transposed(input, layer.weights) +
                              layer.bias);
}

}  // namespace

ad::Var apply_layers(const BoundLayers& layers, ad::Var input) {
  ad::Var h = input;
  for (const auto& l : layers) h = dense(l, h);
  return h;
}

ad::Var apply_decoder(const BoundLayers& layers, ad::Var f, ad::Var b,
                      bool skips) {
  const ad::Var latent = ad::concat({f, b});
  ad::Var h = latent;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i > 0 && skips) h = ad::concat({h, latent});
    h = dense(layers[i], h);
  }
  return h;
}

std::vector<ad::Var> BoundModel::vars(Group g) const {
  std::vector<ad::Var> out;
  auto push = [&out](const BoundLayers& layers) {
    for (const auto& l : layers) {
      out.push_back(l.weights);
      out.push_back(l.bias);
    }
  };
  switch (g) {
    case Group::kEncoder: push(encoder); break;
    case Group::kEmbedding: out.push_back(embedding); break;
    case Group::kDecoder: push(decoder); break;
    case Group::kAdversary: push(adversary); break;
    case Group::kClassifier: push(classifier); break;
    case Group::kDiscriminator: push(discriminator); break;
  }
  return out;
}

BoundModel bind_model(ad::Tape& tape, const FAEModel& model,
                      std::initializer_list<Group> trainable) {
  auto is_trainable = [&](Group g) {
    return std::find(trainable.begin(), trainable.end(), g) != trainable.end();
  };
  BoundModel bm{
      .encoder = bind_layers(tape, model.encoder, is_trainable(Group::kEncoder)),
      .embedding = is_trainable(Group::kEmbedding)
                       ? tape.parameter(model.embedding)
                       : tape.constant(model.embedding),
      .decoder = bind_layers(tape, model.decoder, is_trainable(Group::kDecoder)),
      .adversary =
          bind_layers(tape, model.adversary, is_trainable(Group::kAdversary)),
      .classifier =
          bind_layers(tape, model.classifier, is_trainable(Group::kClassifier)),
      .discriminator = bind_layers(tape, model.discriminator,
                                   is_trainable(Group::kDiscriminator)),
  };
  return bm;
}

Tensor one_hot(std::span<const std::size_t> ids, std::size_t classes) {
  Tensor out(Shape{ids.size(), classes}, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= classes) {
      throw std::out_of_range("condition id " + std::to_string(ids[i]) +
                              " out of range for K=" + std::to_string(classes));
    }
    out(i, ids[i]) = 1.0;
  }
  return out;
}

namespace {

void check_dim(std::size_t got, std::size_t want, std::string_view what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " +
                     std::to_string(want) + ", got " + std::to_string(got));
  }
}

}  // namespace

std::vector<double> encode(const FAEModel& model, std::span<const double> x) {
  check_dim(x.size(), model.arch.input_dim, "encode");
  ad::Tape tape;
  auto layers = bind_layers(tape, model.encoder, false);
  auto in = tape.constant(Tensor::vector({x.begin(), x.end()}));
  return apply_layers(layers, in).value().storage();
}

Tensor encode_batch(const FAEModel& model, const Tensor& x) {
  check_dim(x.cols(), model.arch.input_dim, "encode_batch");
  ad::Tape tape;
  auto layers = bind_layers(tape, model.encoder, false);
  return apply_layers(layers, tape.constant(x)).value();
}

std::vector<double> embed(const FAEModel& model, std::size_t condition) {
  if (condition >= model.arch.conditions) {
    throw std::out_of_range("condition id " + std::to_string(condition) +
                            " out of range for K=" +
                            std::to_string(model.arch.conditions));
  }
  return model.embedding.row(condition);
}

std::vector<double> decode(const FAEModel& model, std::span<const double> f,
                           std::span<const double> b) {
  check_dim(f.size(), model.arch.fiber_dim, "decode fiber");
  check_dim(b.size(), model.arch.base_dim, "decode base");
  std::vector<double> fc(f.begin(), f.end());
  bool clamped = false;
  for (double& v : fc) {
    if (v < -1.0 || v > 1.0) {
      v = std::clamp(v, -1.0, 1.0);
      clamped = true;
    }
  }
  if (clamped) spdlog::warn("decode: fiber coordinate outside [-1,1] clamped");
  ad::Tape tape;
  auto layers = bind_layers(tape, model.decoder, false);
  auto fv = tape.constant(Tensor::vector(std::move(fc)));
  auto bv = tape.constant(Tensor::vector({b.begin(), b.end()}));
  return apply_decoder(layers, fv, bv, model.arch.decoder_skips)
      .value()
      .storage();
}

std::vector<double> classifier_logits(const std::vector<DenseLayer>& layers,
                                      std::span<const double> input) {
  if (layers.empty()) throw std::invalid_argument("classifier has no layers");
  check_dim(input.size(), layers.front().in_dim(), "classifier_logits");
  ad::Tape tape;
  auto bound = bind_layers(tape, layers, false);
  return apply_layers(bound, tape.constant(Tensor::vector({input.begin(),
                                                           input.end()})))
      .value()
      .storage();
}

double discriminator_prob(const std::vector<DenseLayer>& layers,
                          std::span<const double> x) {
  const auto logit = classifier_logits(layers, x);
  check_dim(logit.size(), 1, "discriminator output");
  const double z = logit[0];
  const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                          : std::exp(z) / (1.0 + std::exp(z));
  // keep strictly inside (0,1) even for saturated logits
  return std::clamp(p, DBL_MIN, 1.0 - DBL_EPSILON / 2);
}

}  // namespace fibrae::nn
