#pragma once

#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/featurebank.hpp"
#include "damsl/matrix.hpp"
#include "damsl/rng.hpp"

namespace damsl {

// One n-way k-shot task. Labels are episode-local (0..n_way-1); class_map
// records which bank class each local index came from.
struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t n_query = 0;
  DenseMatrix support_features;             // n_way * k_shot rows
  std::vector<std::size_t> support_labels;  // episode-local
  DenseMatrix query_features;               // n_way * n_query rows
  std::vector<std::size_t> query_labels;
  std::vector<std::string> class_map;
};

inline Episode sample_episode(const FeatureBank& bank, std::size_t n_way, std::size_t k_shot,
                              std::size_t n_query, Rng& rng) {
  if (n_way == 0 || k_shot == 0 || n_query == 0)
    throw protocol_error("sample_episode: n_way, k_shot and n_query must be >= 1");
  if (bank.classes.size() < n_way)
    throw protocol_error("sample_episode: bank '" + bank.domain_name + "' has " +
                         std::to_string(bank.classes.size()) + " classes, protocol needs " +
                         std::to_string(n_way));

  const std::vector<std::size_t> chosen = rng.choose(bank.classes.size(), n_way);
  const std::size_t per_class = k_shot + n_query;

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.n_query = n_query;
  ep.support_features = DenseMatrix(n_way * k_shot, bank.dim);
  ep.query_features = DenseMatrix(n_way * n_query, bank.dim);
  ep.support_labels.reserve(n_way * k_shot);
  ep.query_labels.reserve(n_way * n_query);

  for (std::size_t local = 0; local < n_way; ++local) {
    const auto& cls = bank.classes[chosen[local]];
    if (cls.features.rows < per_class)
      throw protocol_error("sample_episode: class '" + cls.label + "' has " +
                           std::to_string(cls.features.rows) + " rows, protocol needs " +
                           std::to_string(per_class) + " (k_shot " + std::to_string(k_shot) +
                           " + n_query " + std::to_string(n_query) + ")");
    ep.class_map.push_back(cls.label);
    const std::vector<std::size_t> picks = rng.choose(cls.features.rows, per_class);
    for (std::size_t s = 0; s < k_shot; ++s) {
      const std::size_t dst = local * k_shot + s;
      for (std::size_t d = 0; d < bank.dim; ++d)
        ep.support_features(dst, d) = cls.features(picks[s], d);
      ep.support_labels.push_back(local);
    }
    for (std::size_t q = 0; q < n_query; ++q) {
      const std::size_t dst = local * n_query + q;
      for (std::size_t d = 0; d < bank.dim; ++d)
        ep.query_features(dst, d) = cls.features(picks[k_shot + q], d);
      ep.query_labels.push_back(local);
    }
  }
  return ep;
}

}  // namespace damsl
