#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "heml/errors.hpp"
#include "heml/rng.hpp"
#include "heml/types.hpp"

namespace heml {

enum class Activation { ReLU, Identity };

inline const char* activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw ParseError("unknown activation: " + s);
}

// One dense layer: y = act(x * weight + bias), weight is in_dim x out_dim.
template <class S>
struct DenseLayer {
  Matrix<S> weight;
  Vector<S> bias;
  Activation activation = Activation::Identity;

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }
};

template <class S>
struct MlpParams {
  std::vector<DenseLayer<S>> layers;

  Index in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  bool same_architecture(const MlpParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].in_dim() != other.layers[i].in_dim() ||
          layers[i].out_dim() != other.layers[i].out_dim() ||
          layers[i].activation != other.layers[i].activation) {
        return false;
      }
    }
    return true;
  }
};

// Two-stage embedding model. The trunk extracts features; the embedder
// reduces them to embed_dim through exactly one hidden layer.
template <class S>
struct EmbedderModel {
  MlpParams<S> trunk;
  MlpParams<S> embedder;

  Index input_dim() const { return trunk.in_dim(); }
  Index embed_dim() const { return embedder.out_dim(); }

  bool same_architecture(const EmbedderModel& other) const {
    return trunk.same_architecture(other.trunk) &&
           embedder.same_architecture(other.embedder);
  }
};

template <class S>
void validate_mlp(const MlpParams<S>& p, const char* what) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    if (l.bias.size() != l.out_dim()) {
      throw ShapeError(std::string(what) + ": bias length mismatch in layer " +
                       std::to_string(i));
    }
    if (i > 0 && p.layers[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError(std::string(what) + ": layer " + std::to_string(i - 1) +
                       " output dim does not chain into layer " +
                       std::to_string(i));
    }
    require_finite(l.weight, what);
    require_finite(l.bias, what);
  }
}

template <class S>
void validate_model(const EmbedderModel<S>& m) {
  validate_mlp(m.trunk, "trunk");
  validate_mlp(m.embedder, "embedder");
  if (!m.trunk.layers.empty() && !m.embedder.layers.empty() &&
      m.trunk.out_dim() != m.embedder.in_dim()) {
    throw ShapeError("trunk output dim does not match embedder input dim");
  }
  if (m.embedder.layers.size() != 2) {
    throw ShapeError("embedder must have exactly one hidden layer");
  }
}

// Hidden widths of the default architecture. The trunk is a plain MLP,
// one hidden ReLU layer of width 64 by default.
struct ModelShape {
  std::vector<Index> trunk_hidden = {64};
  Index embedder_hidden = 32;
};

namespace detail {

template <class S>
DenseLayer<S> init_layer(Index in_dim, Index out_dim, Activation act,
                         SplitMix64& rng) {
  // Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; weights row-major
  // first, then bias, so the draw order is part of the format.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  DenseLayer<S> layer;
  layer.weight.resize(in_dim, out_dim);
  layer.bias.resize(out_dim);
  layer.activation = act;
  for (Index r = 0; r < in_dim; ++r) {
    for (Index c = 0; c < out_dim; ++c) {
      layer.weight(r, c) = static_cast<S>(bound * rng.next_symmetric());
    }
  }
  for (Index c = 0; c < out_dim; ++c) {
    layer.bias(c) = static_cast<S>(bound * rng.next_symmetric());
  }
  return layer;
}

}  // namespace detail

// Seeded construction; identical (dims, shape, seed) give bitwise-identical
// parameters.
template <class S>
EmbedderModel<S> make_embedder(Index input_dim, Index embed_dim,
                               const ModelShape& shape, std::uint64_t seed) {
  if (input_dim < 1 || embed_dim < 1) {
    throw UsageError("make_embedder: dims must be positive");
  }
  if (shape.trunk_hidden.empty() || shape.embedder_hidden < 1) {
    throw UsageError("make_embedder: invalid model shape");
  }
  SplitMix64 rng(seed);
  EmbedderModel<S> model;
  Index prev = input_dim;
  for (Index width : shape.trunk_hidden) {
    model.trunk.layers.push_back(
        detail::init_layer<S>(prev, width, Activation::ReLU, rng));
    prev = width;
  }
  model.embedder.layers.push_back(
      detail::init_layer<S>(prev, shape.embedder_hidden, Activation::ReLU, rng));
  model.embedder.layers.push_back(detail::init_layer<S>(
      shape.embedder_hidden, embed_dim, Activation::Identity, rng));
  return model;
}

// Per-layer activations captured during a forward pass. Parameters are
// stored in S but the pass itself runs in double, so backward gradients
// are exact derivatives of the forward map.
struct ForwardCache {
  const void* model_tag = nullptr;
  Index batch_rows = 0;
  std::vector<MatrixD> inputs;    // input to layer k, k over trunk+embedder
  std::vector<MatrixD> preacts;   // pre-activation of layer k
  MatrixD output;                 // final embeddings before cast to S
};

namespace detail {

template <class S>
void forward_mlp(const MlpParams<S>& p, MatrixD& x, ForwardCache& cache) {
  for (const auto& layer : p.layers) {
    if (x.cols() != layer.in_dim()) {
      throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                       " columns, layer expects " +
                       std::to_string(layer.in_dim()));
    }
    cache.inputs.push_back(x);
    MatrixD pre = x * layer.weight.template cast<double>();
    pre.rowwise() += layer.bias.template cast<double>().transpose();
    cache.preacts.push_back(pre);
    x = layer.activation == Activation::ReLU
            ? pre.cwiseMax(0.0)
            : std::move(pre);
  }
}

}  // namespace detail

template <class S>
std::pair<Matrix<S>, ForwardCache> mlp_forward(const EmbedderModel<S>& model,
                                               const Matrix<S>& batch) {
  if (batch.cols() != model.input_dim()) {
    throw ShapeError("mlp_forward: batch has " + std::to_string(batch.cols()) +
                     " columns, model expects " +
                     std::to_string(model.input_dim()));
  }
  require_finite(batch, "mlp_forward input");

  ForwardCache cache;
  cache.model_tag = &model;
  cache.batch_rows = batch.rows();

  MatrixD x = batch.template cast<double>();
  detail::forward_mlp(model.trunk, x, cache);
  detail::forward_mlp(model.embedder, x, cache);
  require_finite(x, "mlp_forward output");
  cache.output = x;
  return {x.template cast<S>(), std::move(cache)};
}

template <class S>
struct BackwardResult {
  EmbedderModel<S> param_grads;  // shape-matches the model
  Matrix<S> input_grads;
};

template <class S>
BackwardResult<S> mlp_backward(const EmbedderModel<S>& model,
                               const ForwardCache& cache,
                               const Matrix<S>& grad_embeddings) {
  const std::size_t n_layers =
      model.trunk.layers.size() + model.embedder.layers.size();
  if (cache.model_tag != &model || cache.inputs.size() != n_layers) {
    throw UsageError("mlp_backward: cache does not match this model");
  }
  if (grad_embeddings.rows() != cache.batch_rows ||
      grad_embeddings.cols() != model.embed_dim()) {
    throw UsageError("mlp_backward: gradient shape does not match cache");
  }
  require_finite(grad_embeddings, "mlp_backward upstream gradient");

  auto layer_at = [&](std::size_t k) -> const DenseLayer<S>& {
    return k < model.trunk.layers.size()
               ? model.trunk.layers[k]
               : model.embedder.layers[k - model.trunk.layers.size()];
  };

  BackwardResult<S> result;
  result.param_grads.trunk.layers.resize(model.trunk.layers.size());
  result.param_grads.embedder.layers.resize(model.embedder.layers.size());

  MatrixD g = grad_embeddings.template cast<double>();
  for (std::size_t k = n_layers; k-- > 0;) {
    const DenseLayer<S>& layer = layer_at(k);
    if (layer.activation == Activation::ReLU) {
      // Subgradient 0 at the kink: propagate only where preact > 0.
      g = (cache.preacts[k].array() > 0.0).select(g, MatrixD::Zero(g.rows(), g.cols()));
    }
    DenseLayer<S> grad;
    grad.activation = layer.activation;
    grad.weight = (cache.inputs[k].transpose() * g).template cast<S>();
    grad.bias = g.colwise().sum().transpose().template cast<S>();
    auto& slot = k < model.trunk.layers.size()
                     ? result.param_grads.trunk.layers[k]
                     : result.param_grads.embedder
                           .layers[k - model.trunk.layers.size()];
    slot = std::move(grad);
    g = g * layer.weight.template cast<double>().transpose();
  }
  require_finite(g, "mlp_backward input gradient");
  result.input_grads = g.template cast<S>();
  return result;
}

// p' = p - lr * g, elementwise, accumulated in double.
template <class S>
MlpParams<S> sgd_step(const MlpParams<S>& params, const MlpParams<S>& grads,
                      double lr) {
  if (!params.same_architecture(grads)) {
    throw ShapeError("sgd_step: gradient architecture does not match params");
  }
  MlpParams<S> out = params;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    out.layers[i].weight =
        (params.layers[i].weight.template cast<double>() -
         lr * grads.layers[i].weight.template cast<double>())
            .template cast<S>();
    out.layers[i].bias = (params.layers[i].bias.template cast<double>() -
                          lr * grads.layers[i].bias.template cast<double>())
                             .template cast<S>();
  }
  return out;
}

template <class S>
EmbedderModel<S> sgd_step(const EmbedderModel<S>& model,
                          const EmbedderModel<S>& grads, double lr) {
  EmbedderModel<S> out;
  out.trunk = sgd_step(model.trunk, grads.trunk, lr);
  out.embedder = sgd_step(model.embedder, grads.embedder, lr);
  return out;
}

// Elementwise mean (a + b) / 2; commutative and idempotent on equal inputs.
template <class S>
MlpParams<S> average_params(const MlpParams<S>& a, const MlpParams<S>& b) {
  if (!a.same_architecture(b)) {
    throw ShapeError("average_params: architectures differ");
  }
  MlpParams<S> out = a;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    out.layers[i].weight = ((a.layers[i].weight.template cast<double>() +
                             b.layers[i].weight.template cast<double>()) /
                            2.0)
                               .template cast<S>();
    out.layers[i].bias = ((a.layers[i].bias.template cast<double>() +
                           b.layers[i].bias.template cast<double>()) /
                          2.0)
                             .template cast<S>();
  }
  return out;
}

template <class S>
EmbedderModel<S> average_params(const EmbedderModel<S>& a,
                                const EmbedderModel<S>& b) {
  EmbedderModel<S> out;
  out.trunk = average_params(a.trunk, b.trunk);
  out.embedder = average_params(a.embedder, b.embedder);
  return out;
}

template <class S>
bool params_equal(const MlpParams<S>& a, const MlpParams<S>& b) {
  if (!a.same_architecture(b)) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!(a.layers[i].weight.array() == b.layers[i].weight.array()).all()) {
      return false;
    }
    if (!(a.layers[i].bias.array() == b.layers[i].bias.array()).all()) {
      return false;
    }
  }
  return true;
}

template <class S>
bool models_equal(const EmbedderModel<S>& a, const EmbedderModel<S>& b) {
  return params_equal(a.trunk, b.trunk) && params_equal(a.embedder, b.embedder);
}

}  // namespace heml
