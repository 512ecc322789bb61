#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace damsl {

inline std::uint64_t fnv1a64(std::uint64_t seed, const std::string& tag) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : tag) mix(static_cast<unsigned char>(c));
  return h;
}

// Seedable random stream. split() derives an independent stream from a tag,
// so concurrent or structurally separate consumers never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  Rng split(const std::string& tag) const { return Rng(fnv1a64(seed_, tag)); }

  std::uint64_t seed() const { return seed_; }

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen_);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(gen_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), gen_);
  }

  // First k entries of a random permutation of 0..n-1.
  std::vector<std::size_t> choose(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + uniform_index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace damsl
