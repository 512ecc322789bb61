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

// ---------------------------------------------------------------------------
// Vertex construction
// ---------------------------------------------------------------------------

// Node features: [signal | label block]. Support rows carry one-hot labels,
// the single query row (last) carries the uniform distribution.
inline DenseMatrix build_vertices(const DenseMatrix& support_scores,
                                  const std::vector<std::size_t>& support_labels,
                                  const DenseMatrix& query_score_row, std::size_t n_way) {
  if (support_labels.size() != support_scores.rows)
    throw shape_error("build_vertices: " + std::to_string(support_labels.size()) +
                      " labels for " + std::to_string(support_scores.rows) + " score rows");
  require_shape(query_score_row, 1, support_scores.cols, "build_vertices query row");
  const std::size_t n_support = support_scores.rows;
  const std::size_t width = support_scores.cols;
  DenseMatrix nodes(n_support + 1, width + n_way);
  for (std::size_t r = 0; r < n_support; ++r) {
    if (support_labels[r] >= n_way)
      throw index_error("build_vertices: label " + std::to_string(support_labels[r]) +
                        " out of range [0," + std::to_string(n_way) + ")");
    for (std::size_t c = 0; c < width; ++c) nodes(r, c) = support_scores(r, c);
    nodes(r, width + support_labels[r]) = 1.0;
  }
  for (std::size_t c = 0; c < width; ++c) nodes(n_support, c) = query_score_row(0, c);
  for (std::size_t c = 0; c < n_way; ++c)
    nodes(n_support, width + c) = 1.0 / static_cast<double>(n_way);
  return nodes;
}

// ---------------------------------------------------------------------------
// Learned edges
// ---------------------------------------------------------------------------

// Pair row index for ordered pair (i, j), i != j, in an n-node graph.
inline std::size_t pair_index(std::size_t n, std::size_t i, std::size_t j) {
  return i * (n - 1) + (j < i ? j : j - 1);
}

struct EdgeResult {
  DenseMatrix raw;        // pre-normalization MLP outputs, symmetric, diag 0
  DenseMatrix adjacency;  // row softmax over off-diagonal entries, diag 0
  DenseMatrix pairs;      // |x_i - x_j| rows, ordered by pair_index
  DenseMatrix signs;      // sign(x_i - x_j) per pair row
  MlpTape mlp_tape;
};

// Raw edge score for (i, j) is MLP(|x_i - x_j|); rows of the adjacency are
// softmax-normalized with the diagonal excluded.
inline EdgeResult edge_block_detailed(const DenseMatrix& nodes, const Mlp& edge_mlp) {
  const std::size_t n = nodes.rows;
  if (n < 2) throw protocol_error("edge_block: graph needs at least 2 nodes");
  if (edge_mlp.empty() || edge_mlp.back().out_width() != 1)
    throw config_error("edge_block: edge MLP must end in a scalar output");
  const std::size_t d = nodes.cols;

  EdgeResult res;
  res.pairs = DenseMatrix(n * (n - 1), d);
  res.signs = DenseMatrix(n * (n - 1), d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::size_t p = pair_index(n, i, j);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = nodes(i, c) - nodes(j, c);
        res.pairs(p, c) = std::abs(diff);
        res.signs(p, c) = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      }
    }

  auto [scores, tape] = mlp_forward(edge_mlp, res.pairs);
  res.mlp_tape = std::move(tape);

  res.raw = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) res.raw(i, j) = scores(pair_index(n, i, j), 0);

  res.adjacency = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, res.raw(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = std::exp(res.raw(i, j) - mx);
      res.adjacency(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) res.adjacency(i, j) /= sum;
  }
  return res;
}

inline DenseMatrix edge_block(const DenseMatrix& nodes, const Mlp& edge_mlp) {
  return edge_block_detailed(nodes, edge_mlp).adjacency;
}

// ---------------------------------------------------------------------------
// Graph convolution
// ---------------------------------------------------------------------------

// f( sum_B (B * nodes) * W_B + b_B )
inline DenseMatrix graph_conv(const DenseMatrix& nodes,
                              const std::vector<DenseMatrix>& operators,
                              const std::vector<LayerParams>& thetas, Activation act,
                              double slope = 0.2, DenseMatrix* pre_out = nullptr) {
  if (operators.empty()) throw config_error("graph_conv: empty operator family");
  if (operators.size() != thetas.size())
    throw config_error("graph_conv: " + std::to_string(operators.size()) + " operators vs " +
                       std::to_string(thetas.size()) + " theta blocks");
  const std::size_t n = nodes.rows;
  const std::size_t out_width = thetas.front().out_width();
  DenseMatrix pre(n, out_width);
  for (std::size_t b = 0; b < operators.size(); ++b) {
    require_shape(operators[b], n, n, "graph_conv operator " + std::to_string(b));
    if (thetas[b].in_width() != nodes.cols || thetas[b].out_width() != out_width)
      throw shape_error("graph_conv: theta " + std::to_string(b) + " is " +
                        std::to_string(thetas[b].in_width()) + "x" +
                        std::to_string(thetas[b].out_width()) + ", need " +
                        std::to_string(nodes.cols) + "x" + std::to_string(out_width));
    DenseMatrix mixed = matmul(operators[b], nodes);
    DenseMatrix term = matmul(mixed, thetas[b].weights);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < out_width; ++c) term(r, c) += thetas[b].biases[c];
    add_inplace(pre, term);
  }
  DenseMatrix out = pre;
  if (act != Activation::identity)
    for (double& v : out.data) v = apply_activation(act, slope, v);
  if (pre_out) *pre_out = std::move(pre);
  return out;
}

// ---------------------------------------------------------------------------
// MetricNet
// ---------------------------------------------------------------------------

struct MetricNetConfig {
  std::size_t score_width = 5;
  std::size_t n_way = 5;
  std::size_t n_layers = 3;
  std::size_t conv_width = 16;
  std::vector<std::size_t> edge_hidden = {64, 32};
  bool learned_projection = false;
  double leaky_slope = 0.2;

  std::size_t layer_in_width(std::size_t k) const {
    return (k == 0 ? score_width : conv_width) + n_way;
  }
  std::size_t final_width() const {
    return n_layers == 0 ? score_width + n_way : conv_width + n_way;
  }
};

struct GraphConvLayer {
  Mlp edge_mlp;           // node width -> ... -> 1
  LayerParams theta_self;  // node width -> conv width
  LayerParams theta_adj;
};

struct MetricNet {
  MetricNetConfig cfg;
  LayerParams projection;  // score_width -> score_width, used when learned_projection
  std::vector<GraphConvLayer> layers;
  LayerParams output_head;  // final node width -> n_way

  ParamRefs params() {
    ParamRefs refs;
    if (cfg.learned_projection) refs.add_layer(projection, "projection");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const std::string base = "gc" + std::to_string(k);
      refs.add_mlp(layers[k].edge_mlp, base + ".edge");
      refs.add_layer(layers[k].theta_self, base + ".theta_self");
      refs.add_layer(layers[k].theta_adj, base + ".theta_adj");
    }
    refs.add_layer(output_head, "output_head");
    return refs;
  }
};

inline Mlp make_edge_mlp(std::size_t in_width, const std::vector<std::size_t>& hidden, Rng& rng,
                         double slope) {
  Mlp mlp;
  std::size_t cur = in_width;
  for (std::size_t h : hidden) {
    mlp.push_back(make_random_layer(cur, h, Activation::leaky_relu, rng, slope));
    cur = h;
  }
  mlp.push_back(make_random_layer(cur, 1, Activation::identity, rng));
  return mlp;
}

inline MetricNet make_metric_net(const MetricNetConfig& cfg, Rng& rng) {
  if (cfg.n_layers == 0) throw config_error("metric net: n_layers must be >= 1");
  MetricNet net;
  net.cfg = cfg;
  if (cfg.learned_projection)
    net.projection = make_random_layer(cfg.score_width, cfg.score_width, Activation::identity, rng);
  for (std::size_t k = 0; k < cfg.n_layers; ++k) {
    GraphConvLayer layer;
    const std::size_t in_w = cfg.layer_in_width(k);
    layer.edge_mlp = make_edge_mlp(in_w, cfg.edge_hidden, rng, cfg.leaky_slope);
    layer.theta_self = make_random_layer(in_w, cfg.conv_width, Activation::identity, rng);
    layer.theta_adj = make_random_layer(in_w, cfg.conv_width, Activation::identity, rng);
    net.layers.push_back(std::move(layer));
  }
  net.output_head = make_random_layer(cfg.final_width(), cfg.n_way, Activation::identity, rng);
  return net;
}

struct MetricTape {
  DenseMatrix proj_input;  // stacked score rows, node order (learned projection only)
  struct LayerTape {
    DenseMatrix nodes;  // layer input
    EdgeResult edges;
    DenseMatrix mixed;  // A * nodes
    DenseMatrix pre;    // pre-activation conv output
    DenseMatrix conv;   // post-activation
  };
  std::vector<LayerTape> layers;
  DenseMatrix final_nodes;
  DenseMatrix label_block;  // one-hot rows + uniform query row
};

// Forward pass for ONE query graph: optional projection, vertex build, then
// n_layers of (learned edges -> graph conv over {I, A} -> re-attach label
// block). Returns the query node's logits (1 x n_way).
inline DenseMatrix metric_forward(const MetricNet& net, const DenseMatrix& support_scores,
                                  const std::vector<std::size_t>& support_labels,
                                  const DenseMatrix& query_score_row,
                                  MetricTape* tape = nullptr) {
  const MetricNetConfig& cfg = net.cfg;
  if (support_scores.cols != cfg.score_width)
    throw shape_error("metric_forward: score width " + std::to_string(support_scores.cols) +
                      " vs net score width " + std::to_string(cfg.score_width));
  DenseMatrix scores = vcat(support_scores, query_score_row);
  // Fine-tuned heads emit scores at arbitrary magnitude, and that magnitude
  // varies across domains and across optimizers. Standardizing each score
  // column within the graph makes the metric module scale- and shift-
  // invariant; the statistics are symmetric in the nodes, so support
  // permutations are unaffected.
  for (std::size_t c = 0; c < scores.cols; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < scores.rows; ++r) mu += scores(r, c);
    mu /= static_cast<double>(scores.rows);
    double var = 0.0;
    for (std::size_t r = 0; r < scores.rows; ++r) {
      const double d = scores(r, c) - mu;
      var += d * d;
    }
    var /= static_cast<double>(scores.rows);
    const double inv = 1.0 / std::sqrt(var + 1e-8);
    for (std::size_t r = 0; r < scores.rows; ++r) scores(r, c) = (scores(r, c) - mu) * inv;
  }
  if (cfg.learned_projection) {
    if (tape) tape->proj_input = scores;
    scores = layer_forward(net.projection, scores);
  }
  const std::size_t n_support = support_scores.rows;
  DenseMatrix support_part(n_support, scores.cols);
  for (std::size_t r = 0; r < n_support; ++r)
    for (std::size_t c = 0; c < scores.cols; ++c) support_part(r, c) = scores(r, c);
  DenseMatrix query_part = row(scores, n_support);

  DenseMatrix nodes = build_vertices(support_part, support_labels, query_part, cfg.n_way);
  const std::size_t n = nodes.rows;

  DenseMatrix label_block(n, cfg.n_way);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cfg.n_way; ++c)
      label_block(r, c) = nodes(r, scores.cols + c);
  if (tape) tape->label_block = label_block;

  const DenseMatrix ident = DenseMatrix::identity(n);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const GraphConvLayer& layer = net.layers[k];
    MetricTape::LayerTape lt;
    lt.nodes = nodes;
    try {
      lt.edges = edge_block_detailed(nodes, layer.edge_mlp);
      DenseMatrix pre;
      lt.conv = graph_conv(nodes, {ident, lt.edges.adjacency},
                           {layer.theta_self, layer.theta_adj}, Activation::leaky_relu,
                           cfg.leaky_slope, &pre);
      lt.pre = std::move(pre);
    } catch (const shape_error& e) {
      throw shape_error("metric_forward layer " + std::to_string(k) + ": " + e.what());
    }
    lt.mixed = matmul(lt.edges.adjacency, nodes);
    nodes = hcat(lt.conv, label_block);
    if (tape) tape->layers.push_back(std::move(lt));
  }
  if (tape) tape->final_nodes = nodes;

  DenseMatrix query_final = row(nodes, n - 1);
  return layer_forward(net.output_head, query_final);
}

struct MetricNetGrads {
  DenseMatrix proj_w;
  std::vector<double> proj_b;
  struct LayerGrads {
    std::vector<DenseMatrix> edge_w;
    std::vector<std::vector<double>> edge_b;
    DenseMatrix self_w;
    std::vector<double> self_b;
    DenseMatrix adj_w;
    std::vector<double> adj_b;
  };
  std::vector<LayerGrads> layers;
  DenseMatrix head_w;
  std::vector<double> head_b;

  // Same block order as MetricNet::params().
  GradBlocks to_blocks(const MetricNet& net) const {
    GradBlocks out;
    if (net.cfg.learned_projection) {
      out.push_back(proj_w.data);
      out.push_back(proj_b);
    }
    for (const auto& lg : layers) {
      for (std::size_t i = 0; i < lg.edge_w.size(); ++i) {
        out.push_back(lg.edge_w[i].data);
        out.push_back(lg.edge_b[i]);
      }
      out.push_back(lg.self_w.data);
      out.push_back(lg.self_b);
      out.push_back(lg.adj_w.data);
      out.push_back(lg.adj_b);
    }
    out.push_back(head_w.data);
    out.push_back(head_b);
    return out;
  }
};

inline MetricNetGrads zero_metric_grads(const MetricNet& net) {
  MetricNetGrads g;
  if (net.cfg.learned_projection) {
    g.proj_w = DenseMatrix(net.projection.weights.rows, net.projection.weights.cols);
    g.proj_b.assign(net.projection.biases.size(), 0.0);
  }
  for (const auto& layer : net.layers) {
    MetricNetGrads::LayerGrads lg;
    for (const auto& e : layer.edge_mlp) {
      lg.edge_w.emplace_back(e.weights.rows, e.weights.cols);
      lg.edge_b.emplace_back(e.biases.size(), 0.0);
    }
    lg.self_w = DenseMatrix(layer.theta_self.weights.rows, layer.theta_self.weights.cols);
    lg.self_b.assign(layer.theta_self.biases.size(), 0.0);
    lg.adj_w = DenseMatrix(layer.theta_adj.weights.rows, layer.theta_adj.weights.cols);
    lg.adj_b.assign(layer.theta_adj.biases.size(), 0.0);
    g.layers.push_back(std::move(lg));
  }
  g.head_w = DenseMatrix(net.output_head.weights.rows, net.output_head.weights.cols);
  g.head_b.assign(net.output_head.biases.size(), 0.0);
  return g;
}

// Reverse pass for one query graph. `upstream` is dLoss/dlogits (1 x n_way);
// parameter gradients accumulate into `grads`.
inline void metric_backward(const MetricNet& net, const MetricTape& tape,
                            const DenseMatrix& upstream, MetricNetGrads& grads) {
  const MetricNetConfig& cfg = net.cfg;
  const std::size_t n = tape.final_nodes.rows;

  // Output head reads only the query node (last row).
  DenseMatrix query_final = row(tape.final_nodes, n - 1);
  add_inplace(grads.head_w, matmul_trans_a(query_final, upstream));
  for (std::size_t c = 0; c < upstream.cols; ++c) grads.head_b[c] += upstream(0, c);
  DenseMatrix d_query = matmul_trans_b(upstream, net.output_head.weights);

  DenseMatrix d_nodes(n, tape.final_nodes.cols);
  for (std::size_t c = 0; c < d_nodes.cols; ++c) d_nodes(n - 1, c) = d_query(0, c);

  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const GraphConvLayer& layer = net.layers[k];
    const MetricTape::LayerTape& lt = tape.layers[k];
    const std::size_t conv_w = lt.conv.cols;

    // Label columns of the next layer's input are constants.
    DenseMatrix d_conv(n, conv_w);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < conv_w; ++c) d_conv(r, c) = d_nodes(r, c);

    for (std::size_t i = 0; i < d_conv.data.size(); ++i)
      d_conv.data[i] *=
          activation_grad(Activation::leaky_relu, cfg.leaky_slope, lt.pre.data[i]);

    add_inplace(grads.layers[k].self_w, matmul_trans_a(lt.nodes, d_conv));
    add_inplace(grads.layers[k].adj_w, matmul_trans_a(lt.mixed, d_conv));
    const std::vector<double> bias_grad = col_sums(d_conv);
    for (std::size_t c = 0; c < conv_w; ++c) {
      grads.layers[k].self_b[c] += bias_grad[c];
      grads.layers[k].adj_b[c] += bias_grad[c];
    }

    DenseMatrix d_in = matmul_trans_b(d_conv, layer.theta_self.weights);
    DenseMatrix d_mixed = matmul_trans_b(d_conv, layer.theta_adj.weights);
    DenseMatrix d_adj = matmul_trans_b(d_mixed, lt.nodes);
    add_inplace(d_in, matmul_trans_a(lt.edges.adjacency, d_mixed));

    // Row softmax (diagonal excluded) backward.
    DenseMatrix d_raw_flat(n * (n - 1), 1);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) dot += lt.edges.adjacency(i, j) * d_adj(i, j);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i)
          d_raw_flat(pair_index(n, i, j), 0) = lt.edges.adjacency(i, j) * (d_adj(i, j) - dot);
    }

    const MlpGrads edge_grads = mlp_backward(layer.edge_mlp, lt.edges.mlp_tape, d_raw_flat);
    for (std::size_t li = 0; li < layer.edge_mlp.size(); ++li) {
      add_inplace(grads.layers[k].edge_w[li], edge_grads.weight_grads[li]);
      for (std::size_t c = 0; c < edge_grads.bias_grads[li].size(); ++c)
        grads.layers[k].edge_b[li][c] += edge_grads.bias_grads[li][c];
    }

    // |x_i - x_j| backward: route each pair-row gradient to both endpoints.
    const DenseMatrix& d_pairs = edge_grads.input_grad;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const std::size_t p = pair_index(n, i, j);
        for (std::size_t c = 0; c < lt.nodes.cols; ++c) {
          const double g = d_pairs(p, c) * lt.edges.signs(p, c);
          d_in(i, c) += g;
          d_in(j, c) -= g;
        }
      }

    d_nodes = std::move(d_in);
  }

  if (cfg.learned_projection) {
    // Score block gradient of the first layer's input flows through the
    // projection; the label block and raw scores are constants.
    DenseMatrix d_scores(n, cfg.score_width);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cfg.score_width; ++c) d_scores(r, c) = d_nodes(r, c);
    add_inplace(grads.proj_w, matmul_trans_a(tape.proj_input, d_scores));
    const std::vector<double> pb = col_sums(d_scores);
    for (std::size_t c = 0; c < pb.size(); ++c) grads.proj_b[c] += pb[c];
  }
}

struct MetricLossResult {
  double loss = 0.0;
  MetricNetGrads grads;
};

// Mean cross entropy over queries, each query in its own graph.
inline MetricLossResult metric_loss(const MetricNet& net, const DenseMatrix& support_scores,
                                    const std::vector<std::size_t>& support_labels,
                                    const DenseMatrix& query_scores,
                                    const std::vector<std::size_t>& query_labels) {
  if (query_scores.rows == 0) throw protocol_error("metric_loss: no query rows");
  if (query_labels.size() != query_scores.rows)
    throw shape_error("metric_loss: " + std::to_string(query_labels.size()) + " labels for " +
                      std::to_string(query_scores.rows) + " query rows");
  MetricLossResult res;
  res.grads = zero_metric_grads(net);
  const double inv_q = 1.0 / static_cast<double>(query_scores.rows);
  for (std::size_t q = 0; q < query_scores.rows; ++q) {
    MetricTape tape;
    const DenseMatrix logits =
        metric_forward(net, support_scores, support_labels, row(query_scores, q), &tape);
    const LossAndGrad lg = softmax_cross_entropy(logits, {query_labels[q]});
    res.loss += lg.loss * inv_q;
    DenseMatrix upstream = lg.logit_grad;
    for (double& v : upstream.data) v *= inv_q;
    metric_backward(net, tape, upstream, res.grads);
  }
  return res;
}

// Argmax prediction for a batch of queries, one graph per query.
inline std::vector<std::size_t> metric_predict(const MetricNet& net,
                                               const DenseMatrix& support_scores,
                                               const std::vector<std::size_t>& support_labels,
                                               const DenseMatrix& query_scores) {
  std::vector<std::size_t> out(query_scores.rows, 0);
  for (std::size_t q = 0; q < query_scores.rows; ++q) {
    const DenseMatrix logits =
        metric_forward(net, support_scores, support_labels, row(query_scores, q));
    out[q] = argmax_rows(logits)[0];
  }
  return out;
}

}  // namespace damsl
