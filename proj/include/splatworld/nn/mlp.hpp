#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "splatworld/common.hpp"

namespace splatworld {

enum class Activation { identity, relu, sigmoid, exp, tanh };

template <class S> S apply_activation(Activation a, S x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > S(0) ? x : S(0);
    case Activation::sigmoid: return S(1) / (S(1) + std::exp(-x));
    case Activation::exp: return std::exp(x);
    case Activation::tanh: return std::tanh(x);
  }
  throw InvalidParameterError("unknown activation tag");
}

// Derivative expressed through the activation output (all five admit it).
template <class S> S activation_grad_from_output(Activation a, S y) {
  switch (a) {
    case Activation::identity: return S(1);
    case Activation::relu: return y > S(0) ? S(1) : S(0);
    case Activation::sigmoid: return y * (S(1) - y);
    case Activation::exp: return y;
    case Activation::tanh: return S(1) - y * y;
  }
  throw InvalidParameterError("unknown activation tag");
}

template <class S> struct DenseLayer {
  MatX<S> weights;  // out x in
  VecX<S> bias;     // out
  Activation activation = Activation::identity;

  int in_width() const { return int(weights.cols()); }
  int out_width() const { return int(weights.rows()); }
};

// Plain feed-forward stack. residual_connections lists (from, to) pairs with
// from < to; the post-activation output of layer `from` is added to the
// post-activation output of layer `to`.
template <class S> struct Mlp {
  std::vector<DenseLayer<S>> layers;
  std::vector<std::pair<int, int>> residual_connections;

  int in_width() const { return layers.empty() ? 0 : layers.front().in_width(); }
  int out_width() const { return layers.empty() ? 0 : layers.back().out_width(); }
};

template <class S> struct MlpCache {
  VecX<S> input;
  std::vector<VecX<S>> act_out;  // per-layer activation output, before residual add
  std::vector<VecX<S>> out;      // per-layer output, after residual add
};

template <class S> struct MlpGrads {
  std::vector<MatX<S>> d_weights;
  std::vector<VecX<S>> d_bias;

  MlpGrads() = default;
  explicit MlpGrads(const Mlp<S>& net) {
    d_weights.reserve(net.layers.size());
    d_bias.reserve(net.layers.size());
    for (const auto& l : net.layers) {
      d_weights.push_back(MatX<S>::Zero(l.weights.rows(), l.weights.cols()));
      d_bias.push_back(VecX<S>::Zero(l.bias.size()));
    }
  }
  void set_zero() {
    for (auto& w : d_weights) w.setZero();
    for (auto& b : d_bias) b.setZero();
  }
  void add(const MlpGrads<S>& other) {
    for (size_t i = 0; i < d_weights.size(); ++i) {
      d_weights[i] += other.d_weights[i];
      d_bias[i] += other.d_bias[i];
    }
  }
};

template <class S> void validate(const Mlp<S>& net) {
  for (size_t i = 1; i < net.layers.size(); ++i)
    if (net.layers[i].in_width() != net.layers[i - 1].out_width())
      throw ShapeError("mlp: layer " + std::to_string(i) + " input width " +
                       std::to_string(net.layers[i].in_width()) + " != previous output " +
                       std::to_string(net.layers[i - 1].out_width()));
  for (auto [from, to] : net.residual_connections) {
    if (from < 0 || to <= from || to >= int(net.layers.size()))
      throw ShapeError("mlp: residual pair out of range");
    if (net.layers[from].out_width() != net.layers[to].out_width())
      throw ShapeError("mlp: residual pair connects layers of different widths");
  }
}

template <class S>
std::pair<VecX<S>, MlpCache<S>> mlp_forward(const Mlp<S>& net, const VecX<S>& input) {
  if (!net.layers.empty() && input.size() != net.layers.front().in_width())
    throw ShapeError("mlp_forward: input width " + std::to_string(input.size()) +
                     " != expected " + std::to_string(net.layers.front().in_width()));
  MlpCache<S> cache;
  cache.input = input;
  cache.act_out.resize(net.layers.size());
  cache.out.resize(net.layers.size());
  VecX<S> x = input;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    VecX<S> pre = layer.weights * x + layer.bias;
    VecX<S> y(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) y[i] = apply_activation(layer.activation, pre[i]);
    cache.act_out[l] = y;
    for (auto [from, to] : net.residual_connections)
      if (to == int(l)) y += cache.out[from];
    cache.out[l] = y;
    x = y;
  }
  return {x, cache};
}

// Reverse-mode pass. Parameter gradients are accumulated into `grads`;
// returns the gradient with respect to the input.
template <class S>
VecX<S> mlp_backward(const Mlp<S>& net, const MlpCache<S>& cache, const VecX<S>& grad_output,
                     MlpGrads<S>& grads) {
  const size_t n = net.layers.size();
  if (cache.out.size() != n || grads.d_weights.size() != n)
    throw ShapeError("mlp_backward: cache or gradient buffer does not match the network");
  if (grad_output.size() != net.layers.back().out_width())
    throw ShapeError("mlp_backward: grad_output width mismatch");

  std::vector<VecX<S>> gout(n);
  for (size_t l = 0; l < n; ++l) gout[l] = VecX<S>::Zero(net.layers[l].out_width());
  gout[n - 1] = grad_output;
  VecX<S> grad_input;
  for (size_t l = n; l-- > 0;) {
    const auto& layer = net.layers[l];
    const VecX<S>& g = gout[l];
    for (auto [from, to] : net.residual_connections)
      if (to == int(l)) gout[from] += g;
    VecX<S> gpre(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
      gpre[i] = g[i] * activation_grad_from_output(layer.activation, cache.act_out[l][i]);
    const VecX<S>& in = (l == 0) ? cache.input : cache.out[l - 1];
    if (in.size() != layer.in_width()) throw ShapeError("mlp_backward: stale cache");
    grads.d_weights[l].noalias() += gpre * in.transpose();
    grads.d_bias[l] += gpre;
    VecX<S> gin = layer.weights.transpose() * gpre;
    if (l == 0)
      grad_input = gin;
    else
      gout[l - 1] += gin;
  }
  return grad_input;
}

// Glorot-uniform weights, zero biases.
template <class S>
DenseLayer<S> make_dense(Rng& rng, int in, int out, Activation act) {
  DenseLayer<S> layer;
  layer.weights = MatX<S>(out, in);
  layer.bias = VecX<S>::Zero(out);
  layer.activation = act;
  const double bound = std::sqrt(6.0 / double(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index r = 0; r < out; ++r)
    for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = S(dist(rng));
  return layer;
}

template <class S>
Mlp<S> make_mlp(Rng& rng, const std::vector<int>& widths, const std::vector<Activation>& acts,
                std::vector<std::pair<int, int>> residuals = {}) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1)
    throw ShapeError("make_mlp: need n+1 widths for n activations");
  Mlp<S> net;
  for (size_t l = 0; l + 1 < widths.size(); ++l)
    net.layers.push_back(make_dense<S>(rng, widths[l], widths[l + 1], acts[l]));
  net.residual_connections = std::move(residuals);
  validate(net);
  return net;
}

}  // namespace splatworld
