#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/layers.hpp"
#include "damsl/loss.hpp"
#include "damsl/matrix.hpp"
#include "damsl/optim.hpp"
#include "damsl/rng.hpp"

namespace damsl {

// Fine-tunable adapter stack over frozen feature vectors plus the linear
// classifier that emits pre-softmax scores.
struct EncoderHead {
  Mlp adapter;             // feature dim -> feature dim
  LayerParams classifier;  // feature dim -> n_way, identity activation
  OptKind optimizer_kind = OptKind::adam;

  std::size_t feature_dim() const { return adapter.empty() ? classifier.in_width() : adapter.front().in_width(); }
  std::size_t n_way() const { return classifier.out_width(); }

  ParamRefs params() {
    ParamRefs refs;
    refs.add_mlp(adapter, "adapter");
    refs.add_layer(classifier, "classifier");
    return refs;
  }
};

// Adapter: `hidden_layers` leaky-relu layers plus an identity output layer,
// all feature_dim wide. Classifier starts at zero (uniform scores).
inline EncoderHead make_encoder_head(std::size_t feature_dim, std::size_t n_way,
                                     OptKind optimizer_kind, Rng& rng,
                                     std::size_t hidden_layers = 1) {
  EncoderHead head;
  head.optimizer_kind = optimizer_kind;
  for (std::size_t i = 0; i < hidden_layers; ++i)
    head.adapter.push_back(
        make_random_layer(feature_dim, feature_dim, Activation::leaky_relu, rng));
  head.adapter.push_back(make_random_layer(feature_dim, feature_dim, Activation::identity, rng));
  head.classifier = make_layer(feature_dim, n_way, Activation::identity);
  return head;
}

// Same adapter, fresh zero classifier for an episode's n_way problem.
inline EncoderHead episode_head(const EncoderHead& pretrained, std::size_t n_way) {
  EncoderHead head;
  head.adapter = pretrained.adapter;
  head.optimizer_kind = pretrained.optimizer_kind;
  head.classifier = make_layer(pretrained.feature_dim(), n_way, Activation::identity);
  return head;
}

struct FineTuneConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  double lr = 0.01;
  double jitter_stddev = 0.0;  // feature-space augmentation of support rows
  double grad_clip = 5.0;      // global-norm clip per batch; <= 0 disables
};

// Pre-softmax scores: adapter then linear classifier. No normalization.
inline DenseMatrix score(const EncoderHead& head, const DenseMatrix& features) {
  DenseMatrix cur = features;
  for (const auto& layer : head.adapter) cur = layer_forward(layer, cur);
  return layer_forward(head.classifier, cur);
}

// Gradient-descend adapter + classifier on the support set. Returns a new
// head; the input head is never touched, which is what keeps episodes
// isolated from each other.
inline EncoderHead fine_tune(const EncoderHead& head, const DenseMatrix& support_features,
                             const std::vector<std::size_t>& support_labels,
                             const FineTuneConfig& cfg, Rng& rng,
                             std::vector<double>* epoch_losses = nullptr) {
  const std::size_t n = support_features.rows;
  if (cfg.epochs == 0) throw config_error("fine_tune: epochs must be >= 1");
  if (cfg.batch_size == 0 || cfg.batch_size > n)
    throw config_error("fine_tune: batch size " + std::to_string(cfg.batch_size) +
                       " vs support size " + std::to_string(n));
  if (support_labels.size() != n)
    throw shape_error("fine_tune: " + std::to_string(support_labels.size()) + " labels for " +
                      std::to_string(n) + " support rows");
  for (std::size_t lbl : support_labels)
    if (lbl >= head.n_way())
      throw index_error("fine_tune: label " + std::to_string(lbl) + " out of range [0," +
                        std::to_string(head.n_way()) + ")");

  EncoderHead tuned = head;
  Mlp full;  // adapter layers followed by the classifier, trained jointly
  full = tuned.adapter;
  full.push_back(tuned.classifier);

  ParamRefs refs;
  refs.add_mlp(full, "head");
  OptimizerState opt = make_optimizer(tuned.optimizer_kind, cfg.lr, refs);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
      DenseMatrix batch(bsz, support_features.cols);
      std::vector<std::size_t> batch_labels(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t src = order[start + b];
        for (std::size_t d = 0; d < batch.cols; ++d) batch(b, d) = support_features(src, d);
        batch_labels[b] = support_labels[src];
      }
      if (cfg.jitter_stddev > 0.0)
        for (double& v : batch.data) v += rng.gaussian(0.0, cfg.jitter_stddev);
      auto [logits, tape] = mlp_forward(full, batch);
      const LossAndGrad lg = softmax_cross_entropy(logits, batch_labels);
      const MlpGrads grads = mlp_backward(full, tape, lg.logit_grad);
      GradBlocks flat;
      for (std::size_t li = 0; li < full.size(); ++li) {
        flat.push_back(grads.weight_grads[li].data);
        flat.push_back(grads.bias_grads[li]);
      }
      if (cfg.grad_clip > 0.0) {
        // Momentum can compound a single large batch gradient into runaway
        // updates; a global-norm clip bounds each step without changing the
        // descent direction.
        double sq = 0.0;
        for (const auto& blk : flat)
          for (double g : blk) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          const double scale = cfg.grad_clip / norm;
          for (auto& blk : flat)
            for (double& g : blk) g *= scale;
        }
      }
      optimizer_step(opt, refs, flat);
    }
    if (epoch_losses) {
      auto [logits, tape] = mlp_forward(full, support_features);
      epoch_losses->push_back(softmax_cross_entropy(logits, support_labels).loss);
    }
  }

  tuned.adapter.assign(full.begin(), full.end() - 1);
  tuned.classifier = full.back();
  return tuned;
}

// Score blocks of several heads, concatenated in head order.
inline DenseMatrix ensemble_scores(const std::vector<EncoderHead>& heads,
                                   const DenseMatrix& features) {
  if (heads.empty()) throw config_error("ensemble_scores: no heads");
  const std::size_t n_way = heads.front().n_way();
  const std::size_t dim = heads.front().feature_dim();
  DenseMatrix out(features.rows, 0);
  for (const auto& head : heads) {
    if (head.n_way() != n_way)
      throw config_error("ensemble_scores: heterogeneous n_way (" + std::to_string(n_way) +
                         " vs " + std::to_string(head.n_way()) + ")");
    if (head.feature_dim() != dim)
      throw config_error("ensemble_scores: heterogeneous feature dim");
    out = out.cols == 0 ? score(head, features) : hcat(out, score(head, features));
  }
  return out;
}

// Sum of per-head softmax probabilities, argmax with lowest-index tie break.
inline std::vector<std::size_t> lensem_predict(const std::vector<EncoderHead>& heads,
                                               const DenseMatrix& query_features) {
  if (heads.empty()) throw config_error("lensem_predict: no heads");
  DenseMatrix summed(query_features.rows, heads.front().n_way());
  for (const auto& head : heads) {
    const DenseMatrix probs = softmax_rows(score(head, query_features));
    require_shape(probs, summed.rows, summed.cols, "lensem_predict probs");
    add_inplace(summed, probs);
  }
  return argmax_rows(summed);
}

}  // namespace damsl
