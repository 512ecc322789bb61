#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "damsl/baselines.hpp"
#include "damsl/episode.hpp"
#include "damsl/errors.hpp"
#include "damsl/featurebank.hpp"
#include "damsl/gnn.hpp"
#include "damsl/loss.hpp"
#include "damsl/optim.hpp"
#include "damsl/scorer.hpp"

namespace damsl {

enum class VariantTag {
  damsl_v1,
  damsl_v2,
  lensem_v1,
  lensem_v2,
  ftgnn_v1,
  sproto_v1,
  protonet
};

inline const std::vector<std::pair<VariantTag, std::string>>& variant_names() {
  static const std::vector<std::pair<VariantTag, std::string>> names = {
      {VariantTag::damsl_v1, "damsl_v1"},   {VariantTag::damsl_v2, "damsl_v2"},
      {VariantTag::lensem_v1, "lensem_v1"}, {VariantTag::lensem_v2, "lensem_v2"},
      {VariantTag::ftgnn_v1, "ftgnn_v1"},   {VariantTag::sproto_v1, "sproto_v1"},
      {VariantTag::protonet, "protonet"}};
  return names;
}

inline std::string variant_name(VariantTag tag) {
  for (const auto& [t, n] : variant_names())
    if (t == tag) return n;
  return "unknown";
}

inline VariantTag parse_variant(const std::string& s) {
  for (const auto& [t, n] : variant_names())
    if (n == s) return t;
  std::string valid;
  for (const auto& [t, n] : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw config_error("unknown variant '" + s + "' (valid: " + valid + ")");
}

inline std::size_t variant_encoder_count(VariantTag tag) {
  switch (tag) {
    case VariantTag::protonet: return 0;
    case VariantTag::damsl_v2:
    case VariantTag::lensem_v2: return 2;
    default: return 1;
  }
}

inline bool variant_has_metric(VariantTag tag) {
  return tag == VariantTag::damsl_v1 || tag == VariantTag::damsl_v2 ||
         tag == VariantTag::ftgnn_v1;
}

inline bool variant_has_sproto(VariantTag tag) { return tag == VariantTag::sproto_v1; }

struct Protocol {
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t n_query = 15;
};

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr_adam = 0.001;
  double lr_sgd = 0.01;
  std::size_t fomaml_episodes = 100;
  std::size_t fomaml_inner_steps = 5;
  double fomaml_inner_lr = 0.01;
  double fomaml_outer_lr = 0.001;
};

struct EngineConfig {
  Protocol protocol;
  FineTuneConfig fine_tune;
  PretrainConfig pretrain;
  double metric_lr = 0.001;  // Adam on the metric module's parameters
  std::size_t gnn_layers = 3;
  std::size_t conv_width = 16;
  std::vector<std::size_t> edge_hidden = {64, 32};
  bool learned_projection = false;
  std::size_t adapter_hidden = 1;
  std::size_t sproto_embed = 32;
};

struct Model {
  VariantTag tag = VariantTag::protonet;
  std::size_t feature_dim = 0;
  std::size_t n_way = 5;
  std::vector<EncoderHead> encoders;
  bool has_metric = false;
  MetricNet metric;
  bool has_sproto = false;
  SProtoNet sproto;
};

// Width of the node-signal vectors the metric module consumes.
inline std::size_t metric_signal_width(VariantTag tag, std::size_t feature_dim,
                                       std::size_t n_way) {
  if (tag == VariantTag::ftgnn_v1) return feature_dim;
  return variant_encoder_count(tag) * n_way;
}

inline Model init_model(VariantTag tag, std::size_t feature_dim, std::size_t n_way,
                        const EngineConfig& cfg, Rng& rng) {
  Model model;
  model.tag = tag;
  model.feature_dim = feature_dim;
  model.n_way = n_way;
  const std::size_t n_enc = variant_encoder_count(tag);
  for (std::size_t i = 0; i < n_enc; ++i) {
    // v2 pairs Adam and SGD-momentum encoders; v1 uses a single Adam one.
    const OptKind kind = (n_enc == 2 && i == 1) ? OptKind::sgd_momentum : OptKind::adam;
    Rng enc_rng = rng.split("encoder" + std::to_string(i));
    model.encoders.push_back(
        make_encoder_head(feature_dim, n_way, kind, enc_rng, cfg.adapter_hidden));
  }
  if (variant_has_metric(tag)) {
    MetricNetConfig mcfg;
    mcfg.score_width = metric_signal_width(tag, feature_dim, n_way);
    mcfg.n_way = n_way;
    mcfg.n_layers = cfg.gnn_layers;
    mcfg.conv_width = cfg.conv_width;
    mcfg.edge_hidden = cfg.edge_hidden;
    mcfg.learned_projection = cfg.learned_projection;
    Rng metric_rng = rng.split("metric");
    model.metric = make_metric_net(mcfg, metric_rng);
    model.has_metric = true;
  }
  if (variant_has_sproto(tag)) {
    Rng sp_rng = rng.split("sproto");
    model.sproto = make_sproto(metric_signal_width(tag, feature_dim, n_way),
                               cfg.sproto_embed, sp_rng);
    model.has_sproto = true;
  }
  return model;
}

// Adapter output only (no classifier); FT-GNN consumes these.
inline DenseMatrix adapter_features(const EncoderHead& head, const DenseMatrix& features) {
  DenseMatrix cur = features;
  for (const auto& layer : head.adapter) cur = layer_forward(layer, cur);
  return cur;
}

// Whole-bank supervised training of one encoder over all source classes.
inline void supervised_pretrain(EncoderHead& head, const FeatureBank& bank,
                                const PretrainConfig& cfg, Rng& rng) {
  DenseMatrix all(bank.total_rows(), bank.dim);
  std::vector<std::size_t> labels;
  std::size_t dst = 0;
  for (std::size_t c = 0; c < bank.classes.size(); ++c) {
    const auto& feats = bank.classes[c].features;
    for (std::size_t r = 0; r < feats.rows; ++r, ++dst) {
      for (std::size_t d = 0; d < bank.dim; ++d) all(dst, d) = feats(r, d);
      labels.push_back(c);
    }
  }
  EncoderHead wide = head;
  wide.classifier = make_layer(bank.dim, bank.classes.size(), Activation::identity);
  FineTuneConfig ft;
  ft.epochs = cfg.epochs;
  ft.batch_size = std::min(cfg.batch_size, all.rows);
  ft.lr = head.optimizer_kind == OptKind::adam ? cfg.lr_adam : cfg.lr_sgd;
  head = fine_tune(wide, all, labels, ft, rng);
}

// First-order MAML over source episodes: a copy takes plain-SGD inner steps
// on the support set; the query-loss gradient at the adapted parameters is
// applied directly to the original adapter.
inline void fomaml_pretrain(EncoderHead& head, const FeatureBank& bank, const Protocol& proto,
                            const PretrainConfig& cfg, Rng& rng) {
  if (cfg.fomaml_episodes == 0) return;
  ParamRefs outer_refs;
  outer_refs.add_mlp(head.adapter, "adapter");
  OptimizerState outer = make_optimizer(head.optimizer_kind, cfg.fomaml_outer_lr, outer_refs);

  for (std::size_t e = 0; e < cfg.fomaml_episodes; ++e) {
    const Episode ep = sample_episode(bank, proto.n_way, proto.k_shot, proto.n_query, rng);
    EncoderHead inner = episode_head(head, proto.n_way);
    Mlp full = inner.adapter;
    full.push_back(inner.classifier);
    ParamRefs inner_refs;
    inner_refs.add_mlp(full, "inner");
    for (std::size_t step = 0; step < cfg.fomaml_inner_steps; ++step) {
      auto [logits, tape] = mlp_forward(full, ep.support_features);
      const LossAndGrad lg = softmax_cross_entropy(logits, ep.support_labels);
      const MlpGrads grads = mlp_backward(full, tape, lg.logit_grad);
      for (std::size_t li = 0; li < full.size(); ++li) {
        for (std::size_t k = 0; k < full[li].weights.data.size(); ++k)
          full[li].weights.data[k] -= cfg.fomaml_inner_lr * grads.weight_grads[li].data[k];
        for (std::size_t k = 0; k < full[li].biases.size(); ++k)
          full[li].biases[k] -= cfg.fomaml_inner_lr * grads.bias_grads[li][k];
        full[li].revision += 1;
      }
    }
    auto [logits, tape] = mlp_forward(full, ep.query_features);
    const LossAndGrad lg = softmax_cross_entropy(logits, ep.query_labels);
    const MlpGrads grads = mlp_backward(full, tape, lg.logit_grad);
    GradBlocks outer_grads;  // adapter blocks only (classifier is per-episode)
    for (std::size_t li = 0; li + 1 < full.size(); ++li) {
      outer_grads.push_back(grads.weight_grads[li].data);
      outer_grads.push_back(grads.bias_grads[li]);
    }
    optimizer_step(outer, outer_refs, outer_grads);
  }
}

inline void pretrain_encoders(Model& model, const FeatureBank& bank, const EngineConfig& cfg,
                              Rng& rng) {
  if (bank.classes.size() < cfg.protocol.n_way)
    throw protocol_error("pretrain: source bank has " + std::to_string(bank.classes.size()) +
                         " classes, protocol needs " + std::to_string(cfg.protocol.n_way));
  const bool v1 = variant_encoder_count(model.tag) == 1;
  for (std::size_t i = 0; i < model.encoders.size(); ++i) {
    Rng enc_rng = rng.split("pretrain" + std::to_string(i));
    supervised_pretrain(model.encoders[i], bank, cfg.pretrain, enc_rng);
    if (v1) fomaml_pretrain(model.encoders[i], bank, cfg.protocol, cfg.pretrain, enc_rng);
  }
}

// Fine-tune per-episode copies of every encoder on the support set.
inline std::vector<EncoderHead> tune_episode_heads(const Model& model, const Episode& ep,
                                                   const FineTuneConfig& ft, Rng& rng) {
  std::vector<EncoderHead> tuned;
  for (const auto& enc : model.encoders) {
    EncoderHead copy = episode_head(enc, ep.n_way);
    tuned.push_back(fine_tune(copy, ep.support_features, ep.support_labels, ft, rng));
  }
  return tuned;
}

// Node signals for the metric module / S-Proto under this variant.
inline DenseMatrix episode_signals(const Model& model, const std::vector<EncoderHead>& tuned,
                                   const DenseMatrix& features) {
  if (model.tag == VariantTag::ftgnn_v1) return adapter_features(tuned.front(), features);
  return ensemble_scores(tuned, features);
}

// S-Proto episodic loss: cross entropy over softmax of negative squared
// distances to post-embedding centroids. Gradients flow to the embedding MLP
// through both the query embeddings and the centroids.
struct SProtoLossResult {
  double loss = 0.0;
  GradBlocks grads;  // aligned with SProtoNet::params()
};

inline SProtoLossResult sproto_loss(SProtoNet& net, const DenseMatrix& support_scores,
                                    const std::vector<std::size_t>& support_labels,
                                    const DenseMatrix& query_scores,
                                    const std::vector<std::size_t>& query_labels,
                                    std::size_t n_way) {
  auto [support_z, support_tape] = mlp_forward(net.embed, support_scores);
  auto [query_z, query_tape] = mlp_forward(net.embed, query_scores);
  const DenseMatrix centroids = class_centroids(support_z, support_labels, n_way);
  const DenseMatrix logits = centroid_logits(query_z, centroids);
  const LossAndGrad lg = softmax_cross_entropy(logits, query_labels);

  std::vector<std::size_t> counts(n_way, 0);
  for (std::size_t lbl : support_labels) counts[lbl] += 1;

  DenseMatrix d_query(query_z.rows, query_z.cols);
  DenseMatrix d_centroids(n_way, query_z.cols);
  for (std::size_t q = 0; q < query_z.rows; ++q)
    for (std::size_t k = 0; k < n_way; ++k) {
      const double g = lg.logit_grad(q, k);
      for (std::size_t c = 0; c < query_z.cols; ++c) {
        const double diff = query_z(q, c) - centroids(k, c);
        d_query(q, c) += g * (-2.0 * diff);
        d_centroids(k, c) += g * (2.0 * diff);
      }
    }
  DenseMatrix d_support(support_z.rows, support_z.cols);
  for (std::size_t r = 0; r < support_z.rows; ++r) {
    const std::size_t lbl = support_labels[r];
    for (std::size_t c = 0; c < support_z.cols; ++c)
      d_support(r, c) = d_centroids(lbl, c) / static_cast<double>(counts[lbl]);
  }

  const MlpGrads gq = mlp_backward(net.embed, query_tape, d_query);
  const MlpGrads gs = mlp_backward(net.embed, support_tape, d_support);

  SProtoLossResult res;
  res.loss = lg.loss;
  for (std::size_t li = 0; li < net.embed.size(); ++li) {
    std::vector<double> w = gq.weight_grads[li].data;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += gs.weight_grads[li].data[k];
    std::vector<double> b = gq.bias_grads[li];
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += gs.bias_grads[li][k];
    res.grads.push_back(std::move(w));
    res.grads.push_back(std::move(b));
  }
  return res;
}

// Episodic meta-training of the metric module on the source domain. Encoder
// copies are fine-tuned and discarded per episode; only metric parameters
// persist across episodes. Returns the per-episode loss trace.
inline std::vector<double> meta_train(Model& model, const FeatureBank& source,
                                      std::size_t episodes, const EngineConfig& cfg, Rng& rng) {
  if (!model.has_metric && !model.has_sproto)
    throw config_error("meta_train: variant '" + variant_name(model.tag) +
                       "' has no trainable metric module");
  std::vector<double> losses;
  if (episodes == 0) return losses;

  ParamRefs refs = model.has_metric ? model.metric.params() : model.sproto.params();
  OptimizerState opt = make_optimizer(OptKind::adam, cfg.metric_lr, refs);

  for (std::size_t e = 0; e < episodes; ++e) {
    const Episode ep = sample_episode(source, cfg.protocol.n_way, cfg.protocol.k_shot,
                                      cfg.protocol.n_query, rng);
    const std::vector<EncoderHead> tuned = tune_episode_heads(model, ep, cfg.fine_tune, rng);
    const DenseMatrix support_sig = episode_signals(model, tuned, ep.support_features);
    const DenseMatrix query_sig = episode_signals(model, tuned, ep.query_features);

    double loss;
    if (model.has_metric) {
      const MetricLossResult r =
          metric_loss(model.metric, support_sig, ep.support_labels, query_sig, ep.query_labels);
      loss = r.loss;
      if (!std::isfinite(loss))
        throw numeric_error("meta_train: non-finite loss at episode " + std::to_string(e));
      optimizer_step(opt, refs, r.grads.to_blocks(model.metric));
    } else {
      const SProtoLossResult r = sproto_loss(model.sproto, support_sig, ep.support_labels,
                                             query_sig, ep.query_labels, ep.n_way);
      loss = r.loss;
      if (!std::isfinite(loss))
        throw numeric_error("meta_train: non-finite loss at episode " + std::to_string(e));
      optimizer_step(opt, refs, r.grads);
    }
    losses.push_back(loss);
  }
  return losses;
}

inline std::vector<std::size_t> predict_episode(const Model& model, const Episode& ep,
                                                const FineTuneConfig& ft, Rng& rng) {
  switch (model.tag) {
    case VariantTag::protonet:
      return protonet_predict(ep.support_features, ep.support_labels, ep.query_features,
                              ep.n_way);
    default: break;
  }
  const std::vector<EncoderHead> tuned = tune_episode_heads(model, ep, ft, rng);
  switch (model.tag) {
    case VariantTag::lensem_v1:
    case VariantTag::lensem_v2:
      return lensem_predict(tuned, ep.query_features);
    case VariantTag::sproto_v1: {
      const DenseMatrix s = episode_signals(model, tuned, ep.support_features);
      const DenseMatrix q = episode_signals(model, tuned, ep.query_features);
      return sproto_predict(model.sproto, s, ep.support_labels, q, ep.n_way);
    }
    default: {
      const DenseMatrix s = episode_signals(model, tuned, ep.support_features);
      const DenseMatrix q = episode_signals(model, tuned, ep.query_features);
      return metric_predict(model.metric, s, ep.support_labels, q);
    }
  }
}

struct EvalReport {
  std::size_t n_episodes = 0;
  std::vector<double> per_episode;
  double mean = 0.0;
  double ci95 = 0.0;
  Protocol protocol;
  VariantTag tag = VariantTag::protonet;
  std::uint64_t seed = 0;
};

inline std::pair<double, double> mean_and_ci95(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  return {mean, 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(xs.size()))};
}

// Test-time protocol: per episode, encoder COPIES are fine-tuned on the
// support set; the model itself is read-only throughout.
inline EvalReport evaluate(const Model& model, const FeatureBank& target,
                           const Protocol& proto, std::size_t n_episodes,
                           const FineTuneConfig& ft, Rng& rng) {
  EvalReport report;
  report.protocol = proto;
  report.tag = model.tag;
  report.seed = rng.seed();
  report.n_episodes = n_episodes;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const Episode ep = sample_episode(target, proto.n_way, proto.k_shot, proto.n_query, rng);
    const std::vector<std::size_t> pred = predict_episode(model, ep, ft, rng);
    std::size_t correct = 0;
    for (std::size_t q = 0; q < pred.size(); ++q)
      if (pred[q] == ep.query_labels[q]) ++correct;
    report.per_episode.push_back(static_cast<double>(correct) /
                                 static_cast<double>(pred.size()));
  }
  const auto [mean, ci] = mean_and_ci95(report.per_episode);
  report.mean = mean;
  report.ci95 = ci;
  return report;
}

}  // namespace damsl
