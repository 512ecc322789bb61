#pragma once

#include <limits>
#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/gnn.hpp"
#include "damsl/layers.hpp"
#include "damsl/matrix.hpp"

namespace damsl {

// Class centroids (means of support rows per class).
inline DenseMatrix class_centroids(const DenseMatrix& support,
                                   const std::vector<std::size_t>& labels, std::size_t n_way) {
  if (labels.size() != support.rows)
    throw shape_error("class_centroids: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(support.rows) + " rows");
  DenseMatrix centroids(n_way, support.cols);
  std::vector<std::size_t> counts(n_way, 0);
  for (std::size_t r = 0; r < support.rows; ++r) {
    if (labels[r] >= n_way)
      throw index_error("class_centroids: label " + std::to_string(labels[r]) +
                        " out of range [0," + std::to_string(n_way) + ")");
    counts[labels[r]] += 1;
    for (std::size_t c = 0; c < support.cols; ++c) centroids(labels[r], c) += support(r, c);
  }
  for (std::size_t k = 0; k < n_way; ++k) {
    if (counts[k] == 0)
      throw protocol_error("class_centroids: class " + std::to_string(k) +
                           " has no support samples");
    for (std::size_t c = 0; c < support.cols; ++c)
      centroids(k, c) /= static_cast<double>(counts[k]);
  }
  return centroids;
}

// Negative squared Euclidean distance to each centroid, one row per query.
inline DenseMatrix centroid_logits(const DenseMatrix& queries, const DenseMatrix& centroids) {
  DenseMatrix logits(queries.rows, centroids.rows);
  for (std::size_t q = 0; q < queries.rows; ++q)
    for (std::size_t k = 0; k < centroids.rows; ++k) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < queries.cols; ++c) {
        const double diff = queries(q, c) - centroids(k, c);
        d2 += diff * diff;
      }
      logits(q, k) = -d2;
    }
  return logits;
}

// Nearest centroid in raw feature space; ties break to the lowest class.
inline std::vector<std::size_t> protonet_predict(const DenseMatrix& support_features,
                                                 const std::vector<std::size_t>& support_labels,
                                                 const DenseMatrix& query_features,
                                                 std::size_t n_way) {
  const DenseMatrix centroids = class_centroids(support_features, support_labels, n_way);
  return argmax_rows(centroid_logits(query_features, centroids));
}

// Score-space ProtoNet: an embedding MLP, then nearest centroid in the
// embedding space (centroids are computed after embedding).
struct SProtoNet {
  Mlp embed;  // score width -> embed width

  ParamRefs params() {
    ParamRefs refs;
    refs.add_mlp(embed, "embed");
    return refs;
  }
};

inline SProtoNet make_sproto(std::size_t score_width, std::size_t embed_width, Rng& rng) {
  if (embed_width == 0) throw config_error("sproto: embed width must be >= 1");
  SProtoNet net;
  net.embed.push_back(make_random_layer(score_width, embed_width, Activation::leaky_relu, rng));
  net.embed.push_back(make_random_layer(embed_width, embed_width, Activation::identity, rng));
  return net;
}

inline std::vector<std::size_t> sproto_predict(const SProtoNet& net,
                                               const DenseMatrix& support_scores,
                                               const std::vector<std::size_t>& support_labels,
                                               const DenseMatrix& query_scores,
                                               std::size_t n_way) {
  const DenseMatrix support_z = mlp_forward(net.embed, support_scores).first;
  const DenseMatrix query_z = mlp_forward(net.embed, query_scores).first;
  const DenseMatrix centroids = class_centroids(support_z, support_labels, n_way);
  return argmax_rows(centroid_logits(query_z, centroids));
}

// FT-GNN: the metric pipeline applied to (fine-tuned) feature vectors
// instead of scores. The net's score width must equal the feature dim.
inline std::vector<std::size_t> ftgnn_predict(const MetricNet& net,
                                              const DenseMatrix& support_features,
                                              const std::vector<std::size_t>& support_labels,
                                              const DenseMatrix& query_features) {
  return metric_predict(net, support_features, support_labels, query_features);
}

}  // namespace damsl
