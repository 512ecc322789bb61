#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "damsl/baselines.hpp"
#include "damsl/episode.hpp"
#include "damsl/featurebank.hpp"

using namespace damsl;

namespace {

// Independent nearest-centroid reference: accumulate sums with plain loops,
// compare squared distances pairwise, lowest class wins ties.
std::vector<std::size_t> naive_nearest_centroid(const DenseMatrix& support,
                                                const std::vector<std::size_t>& labels,
                                                const DenseMatrix& queries, std::size_t n_way) {
  std::vector<std::vector<double>> sums(n_way, std::vector<double>(support.cols, 0.0));
  std::vector<std::size_t> counts(n_way, 0);
  for (std::size_t r = 0; r < support.rows; ++r) {
    counts[labels[r]] += 1;
    for (std::size_t c = 0; c < support.cols; ++c) sums[labels[r]][c] += support(r, c);
  }
  std::vector<std::size_t> out(queries.rows);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_way; ++k) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < queries.cols; ++c) {
        const double diff = queries(q, c) - sums[k][c] / static_cast<double>(counts[k]);
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    out[q] = best;
  }
  return out;
}

DenseMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[0].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

}  // namespace

TEST_CASE("one-shot support rows are their own centroids") {
  DenseMatrix support = from_rows({{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}});
  std::vector<std::size_t> labels = {0, 1, 2};
  DenseMatrix queries = from_rows({{9.0, 1.0}, {1.0, 9.0}, {0.5, 0.5}});
  auto pred = protonet_predict(support, labels, queries, 3);
  REQUIRE(pred == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("centroids average the support rows per class") {
  DenseMatrix support = from_rows({{1.0, 2.0}, {3.0, 4.0}, {10.0, 0.0}, {0.0, 10.0}});
  std::vector<std::size_t> labels = {0, 0, 1, 1};
  DenseMatrix cents = class_centroids(support, labels, 2);
  REQUIRE(cents(0, 0) == 2.0);
  REQUIRE(cents(0, 1) == 3.0);
  REQUIRE(cents(1, 0) == 5.0);
  REQUIRE(cents(1, 1) == 5.0);
}

TEST_CASE("centroid logits are exact negative squared distances") {
  DenseMatrix cents = from_rows({{0.0, 0.0}, {3.0, 4.0}});
  DenseMatrix queries = from_rows({{3.0, 0.0}});
  DenseMatrix logits = centroid_logits(queries, cents);
  REQUIRE(logits(0, 0) == -9.0);
  REQUIRE(logits(0, 1) == -16.0);
}

TEST_CASE("equidistant query ties to the lowest class") {
  DenseMatrix support = from_rows({{-1.0, 0.0}, {1.0, 0.0}});
  std::vector<std::size_t> labels = {0, 1};
  DenseMatrix queries = from_rows({{0.0, 5.0}});
  auto pred = protonet_predict(support, labels, queries, 2);
  REQUIRE(pred == std::vector<std::size_t>{0});
}

TEST_CASE("protonet matches the brute-force oracle on 1000 episodes") {
  SyntheticDomainSpec spec;
  spec.shift = shift_preset("mid");
  FeatureBank bank = gen_synthetic_domain(spec, 40, 77, "oracle");
  Rng rng(123);
  for (int e = 0; e < 1000; ++e) {
    Episode ep = sample_episode(bank, 5, 5, 3, rng);
    auto pred = protonet_predict(ep.support_features, ep.support_labels, ep.query_features, 5);
    auto oracle =
        naive_nearest_centroid(ep.support_features, ep.support_labels, ep.query_features, 5);
    REQUIRE(pred == oracle);
  }
}

TEST_CASE("duplicating every support row leaves predictions unchanged") {
  SyntheticDomainSpec spec;
  FeatureBank bank = gen_synthetic_domain(spec, 20, 9, "dup");
  Rng rng(5);
  Episode ep = sample_episode(bank, 5, 4, 10, rng);
  DenseMatrix doubled(ep.support_features.rows * 2, ep.support_features.cols);
  std::vector<std::size_t> doubled_labels;
  for (std::size_t r = 0; r < ep.support_features.rows; ++r) {
    for (std::size_t c = 0; c < ep.support_features.cols; ++c) {
      doubled(2 * r, c) = ep.support_features(r, c);
      doubled(2 * r + 1, c) = ep.support_features(r, c);
    }
    doubled_labels.push_back(ep.support_labels[r]);
    doubled_labels.push_back(ep.support_labels[r]);
  }
  auto p1 = protonet_predict(ep.support_features, ep.support_labels, ep.query_features, 5);
  auto p2 = protonet_predict(doubled, doubled_labels, ep.query_features, 5);
  REQUIRE(p1 == p2);
}

TEST_CASE("uniform scaling of all features preserves predictions") {
  SyntheticDomainSpec spec;
  FeatureBank bank = gen_synthetic_domain(spec, 15, 21, "scale");
  Rng rng(6);
  Episode ep = sample_episode(bank, 5, 3, 8, rng);
  DenseMatrix s2 = ep.support_features, q2 = ep.query_features;
  for (double& v : s2.data) v *= 7.5;
  for (double& v : q2.data) v *= 7.5;
  auto p1 = protonet_predict(ep.support_features, ep.support_labels, ep.query_features, 5);
  auto p2 = protonet_predict(s2, ep.support_labels, q2, 5);
  REQUIRE(p1 == p2);
}

TEST_CASE("sproto with identity embedding reduces to protonet on positive data") {
  // Two layers: leaky-relu then identity, both with identity weights and zero
  // bias. On strictly positive inputs leaky-relu is the identity, so the
  // embedding is the identity map and sproto must agree with protonet.
  const std::size_t dim = 4;
  SProtoNet net;
  net.embed.push_back(make_layer(dim, dim, Activation::leaky_relu));
  net.embed.push_back(make_layer(dim, dim, Activation::identity));
  for (std::size_t d = 0; d < dim; ++d) {
    net.embed[0].weights(d, d) = 1.0;
    net.embed[1].weights(d, d) = 1.0;
  }
  Rng rng(31);
  DenseMatrix support(10, dim), queries(6, dim);
  for (double& v : support.data) v = 1.0 + rng.uniform();
  for (double& v : queries.data) v = 1.0 + rng.uniform();
  std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
  auto ps = sproto_predict(net, support, labels, queries, 5);
  auto pp = protonet_predict(support, labels, queries, 5);
  REQUIRE(ps == pp);
}

TEST_CASE("sproto matches a naive embed-then-centroid oracle on 200 episodes") {
  SyntheticDomainSpec spec;
  spec.dim = 8;
  FeatureBank bank = gen_synthetic_domain(spec, 20, 55, "sproto");
  Rng init(77);
  SProtoNet net = make_sproto(8, 6, init);
  Rng rng(321);
  for (int e = 0; e < 200; ++e) {
    Episode ep = sample_episode(bank, 5, 3, 2, rng);
    auto pred = sproto_predict(net, ep.support_features, ep.support_labels, ep.query_features, 5);
    const DenseMatrix sz = mlp_forward(net.embed, ep.support_features).first;
    const DenseMatrix qz = mlp_forward(net.embed, ep.query_features).first;
    auto oracle = naive_nearest_centroid(sz, ep.support_labels, qz, 5);
    REQUIRE(pred == oracle);
  }
}

TEST_CASE("sproto centroids live in embedding space, not score space") {
  // A collapsing embedding (all weights zero) maps everything to the origin,
  // so all distances tie and every prediction is class 0 — which can only
  // happen if centroids are taken after the embedding.
  SProtoNet net;
  net.embed.push_back(make_layer(3, 2, Activation::leaky_relu));
  net.embed.push_back(make_layer(2, 2, Activation::identity));
  DenseMatrix support = from_rows({{5.0, 0.0, 0.0}, {0.0, 5.0, 0.0}});
  std::vector<std::size_t> labels = {0, 1};
  DenseMatrix queries = from_rows({{0.0, 5.0, 0.0}});
  auto pred = sproto_predict(net, support, labels, queries, 2);
  REQUIRE(pred == std::vector<std::size_t>{0});
}

TEST_CASE("ftgnn with a zero output head ties every class to index 0") {
  MetricNetConfig cfg;
  cfg.score_width = 6;
  cfg.n_way = 3;
  cfg.n_layers = 1;
  cfg.conv_width = 4;
  cfg.edge_hidden = {4};
  Rng rng(11);
  MetricNet net = make_metric_net(cfg, rng);
  for (double& v : net.output_head.weights.data) v = 0.0;
  for (double& v : net.output_head.biases) v = 0.0;
  DenseMatrix support(6, 6), queries(4, 6);
  Rng fill(12);
  for (double& v : support.data) v = fill.gaussian(0.0, 1.0);
  for (double& v : queries.data) v = fill.gaussian(0.0, 1.0);
  std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2};
  auto pred = ftgnn_predict(net, support, labels, queries);
  REQUIRE(pred == std::vector<std::size_t>(4, 0));
}

TEST_CASE("ftgnn agrees with metric_predict on the same inputs") {
  MetricNetConfig cfg;
  cfg.score_width = 5;
  cfg.n_way = 5;
  cfg.n_layers = 2;
  cfg.conv_width = 6;
  cfg.edge_hidden = {8};
  Rng rng(42);
  MetricNet net = make_metric_net(cfg, rng);
  Rng fill(43);
  DenseMatrix support(10, 5), queries(7, 5);
  for (double& v : support.data) v = fill.gaussian(0.0, 1.0);
  for (double& v : queries.data) v = fill.gaussian(0.0, 1.0);
  std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
  REQUIRE(ftgnn_predict(net, support, labels, queries) ==
          metric_predict(net, support, labels, queries));
}

TEST_CASE("label count mismatch and bad labels raise errors") {
  DenseMatrix support = from_rows({{1.0, 2.0}, {3.0, 4.0}});
  REQUIRE_THROWS_AS(class_centroids(support, {0}, 2), shape_error);
  REQUIRE_THROWS_AS(class_centroids(support, {0, 5}, 2), index_error);
  REQUIRE_THROWS_AS(class_centroids(support, {0, 0}, 2), protocol_error);
}
