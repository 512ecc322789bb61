#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/layers.hpp"

namespace damsl {

// A flat, ordered view over every trainable double of a model. Optimizers,
// the gradient checker and checkpoints all walk the same block order.
struct ParamRefs {
  std::vector<std::span<double>> blocks;
  std::vector<std::string> names;
  std::vector<std::uint64_t*> revisions;

  void add(std::span<double> block, std::string name, std::uint64_t* revision) {
    blocks.push_back(block);
    names.push_back(std::move(name));
    revisions.push_back(revision);
  }

  void add_layer(LayerParams& layer, const std::string& name) {
    add(std::span<double>(layer.weights.data), name + ".weights", &layer.revision);
    add(std::span<double>(layer.biases), name + ".biases", &layer.revision);
  }

  void add_mlp(Mlp& net, const std::string& name) {
    for (std::size_t i = 0; i < net.size(); ++i)
      add_layer(net[i], name + ".layer" + std::to_string(i));
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
  }
};

using GradBlocks = std::vector<std::vector<double>>;

inline GradBlocks zero_grads_like(const ParamRefs& params) {
  GradBlocks g(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i)
    g[i].assign(params.blocks[i].size(), 0.0);
  return g;
}

inline void accumulate(GradBlocks& into, const GradBlocks& from, double scale = 1.0) {
  if (into.size() != from.size())
    throw shape_error("accumulate: block counts " + std::to_string(into.size()) + " vs " +
                      std::to_string(from.size()));
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (into[i].size() != from[i].size())
      throw shape_error("accumulate: block " + std::to_string(i) + " sizes " +
                        std::to_string(into[i].size()) + " vs " +
                        std::to_string(from[i].size()));
    for (std::size_t k = 0; k < into[i].size(); ++k) into[i][k] += scale * from[i][k];
  }
}

enum class OptKind { sgd_momentum, adam };

inline std::string opt_kind_name(OptKind k) {
  return k == OptKind::adam ? "adam" : "sgd_momentum";
}

struct OptimizerState {
  OptKind kind = OptKind::sgd_momentum;
  double lr = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  GradBlocks moment1;  // momentum buffer (sgd) / first moment (adam)
  GradBlocks moment2;  // second moment (adam only)
};

inline OptimizerState make_optimizer(OptKind kind, double lr, const ParamRefs& params) {
  OptimizerState s;
  s.kind = kind;
  s.lr = lr;
  s.moment1.resize(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i)
    s.moment1[i].assign(params.blocks[i].size(), 0.0);
  if (kind == OptKind::adam) s.moment2 = s.moment1;
  return s;
}

inline void optimizer_step(OptimizerState& state, ParamRefs& params, const GradBlocks& grads) {
  if (grads.size() != params.blocks.size() || state.moment1.size() != params.blocks.size())
    throw shape_error("optimizer_step: block count mismatch (params " +
                      std::to_string(params.blocks.size()) + ", grads " +
                      std::to_string(grads.size()) + ", state " +
                      std::to_string(state.moment1.size()) + ")");
  state.step_count += 1;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto& p = params.blocks[i];
    const auto& g = grads[i];
    if (g.size() != p.size())
      throw shape_error("optimizer_step: block '" + params.names[i] + "' sizes " +
                        std::to_string(p.size()) + " vs grad " + std::to_string(g.size()));
    auto& m1 = state.moment1[i];
    if (state.kind == OptKind::sgd_momentum) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        m1[k] = state.momentum * m1[k] + g[k];
        p[k] -= state.lr * m1[k];
      }
    } else {
      auto& m2 = state.moment2[i];
      const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
      const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
      for (std::size_t k = 0; k < p.size(); ++k) {
        m1[k] = state.beta1 * m1[k] + (1.0 - state.beta1) * g[k];
        m2[k] = state.beta2 * m2[k] + (1.0 - state.beta2) * g[k] * g[k];
        const double mhat = m1[k] / c1;
        const double vhat = m2[k] / c2;
        p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
      }
    }
  }
  for (std::uint64_t* rev : params.revisions) *rev += 1;
}

}  // namespace damsl
