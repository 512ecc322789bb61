#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/matrix.hpp"
#include "damsl/rng.hpp"

namespace damsl {

enum class Activation { identity, relu, leaky_relu, tanh_act };

// One dense layer: y = act(x * weights + biases).
// `revision` advances on every parameter update; tapes record it so a
// backward pass against mutated parameters is rejected as stale.
struct LayerParams {
  DenseMatrix weights;         // in x out
  std::vector<double> biases;  // out
  Activation activation = Activation::identity;
  double leaky_slope = 0.2;
  std::uint64_t revision = 0;

  std::size_t in_width() const { return weights.rows; }
  std::size_t out_width() const { return weights.cols; }
};

using Mlp = std::vector<LayerParams>;

inline LayerParams make_layer(std::size_t in, std::size_t out, Activation act,
                              double leaky_slope = 0.2) {
  if (act == Activation::leaky_relu && (leaky_slope <= 0.0 || leaky_slope >= 1.0))
    throw config_error("leaky_relu slope must lie in (0,1), got " +
                       std::to_string(leaky_slope));
  LayerParams p;
  p.weights = DenseMatrix(in, out);
  p.biases.assign(out, 0.0);
  p.activation = act;
  p.leaky_slope = leaky_slope;
  return p;
}

// Gaussian init scaled by 1/sqrt(fan_in).
inline LayerParams make_random_layer(std::size_t in, std::size_t out, Activation act,
                                     Rng& rng, double leaky_slope = 0.2) {
  LayerParams p = make_layer(in, out, act, leaky_slope);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : p.weights.data) w = rng.gaussian(0.0, scale);
  return p;
}

inline double apply_activation(Activation act, double slope, double x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : slope * x;
    case Activation::tanh_act: return std::tanh(x);
  }
  return x;
}

// Derivative as a function of pre-activation x.
inline double activation_grad(Activation act, double slope, double x) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : slope;
    case Activation::tanh_act: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// Cached intermediates of one mlp_forward call, sufficient for an exact
// backward pass.
struct MlpTape {
  DenseMatrix input;
  std::vector<DenseMatrix> pre_activations;   // per layer
  std::vector<DenseMatrix> outputs;           // per layer, post-activation
  std::vector<std::uint64_t> revisions;       // per layer, at record time
};

struct MlpGrads {
  std::vector<DenseMatrix> weight_grads;
  std::vector<std::vector<double>> bias_grads;
  DenseMatrix input_grad;
};

inline DenseMatrix layer_forward(const LayerParams& layer, const DenseMatrix& x,
                                 DenseMatrix* pre_out = nullptr) {
  if (x.cols != layer.in_width())
    throw shape_error("layer_forward: input width " + std::to_string(x.cols) +
                      " vs layer input width " + std::to_string(layer.in_width()));
  DenseMatrix pre = matmul(x, layer.weights);
  for (std::size_t r = 0; r < pre.rows; ++r)
    for (std::size_t c = 0; c < pre.cols; ++c) pre(r, c) += layer.biases[c];
  DenseMatrix out = pre;
  if (layer.activation != Activation::identity)
    for (double& v : out.data) v = apply_activation(layer.activation, layer.leaky_slope, v);
  if (pre_out) *pre_out = std::move(pre);
  return out;
}

inline std::pair<DenseMatrix, MlpTape> mlp_forward(const Mlp& net, const DenseMatrix& input) {
  MlpTape tape;
  tape.input = input;
  DenseMatrix cur = input;
  for (std::size_t li = 0; li < net.size(); ++li) {
    DenseMatrix pre;
    cur = layer_forward(net[li], cur, &pre);
    tape.pre_activations.push_back(std::move(pre));
    tape.outputs.push_back(cur);
    tape.revisions.push_back(net[li].revision);
  }
  return {cur, std::move(tape)};
}

inline MlpGrads mlp_backward(const Mlp& net, const MlpTape& tape,
                             const DenseMatrix& upstream_grad) {
  if (net.empty()) throw config_error("mlp_backward: empty network");
  if (tape.outputs.size() != net.size())
    throw shape_error("mlp_backward: tape depth " + std::to_string(tape.outputs.size()) +
                      " vs net depth " + std::to_string(net.size()));
  for (std::size_t li = 0; li < net.size(); ++li)
    if (tape.revisions[li] != net[li].revision)
      throw stale_tape_error("mlp_backward: layer " + std::to_string(li) +
                             " parameters changed since the tape was recorded");
  const DenseMatrix& out = tape.outputs.back();
  require_shape(upstream_grad, out.rows, out.cols, "mlp_backward upstream");

  MlpGrads grads;
  grads.weight_grads.resize(net.size());
  grads.bias_grads.resize(net.size());

  DenseMatrix delta = upstream_grad;
  for (std::size_t i = net.size(); i-- > 0;) {
    const LayerParams& layer = net[i];
    const DenseMatrix& pre = tape.pre_activations[i];
    if (layer.activation != Activation::identity)
      for (std::size_t k = 0; k < delta.data.size(); ++k)
        delta.data[k] *= activation_grad(layer.activation, layer.leaky_slope, pre.data[k]);
    const DenseMatrix& layer_in = (i == 0) ? tape.input : tape.outputs[i - 1];
    grads.weight_grads[i] = matmul_trans_a(layer_in, delta);
    grads.bias_grads[i] = col_sums(delta);
    delta = matmul_trans_b(delta, layer.weights);
  }
  grads.input_grad = std::move(delta);
  return grads;
}

}  // namespace damsl
