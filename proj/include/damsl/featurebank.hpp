#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "damsl/errors.hpp"
#include "damsl/matrix.hpp"
#include "damsl/rng.hpp"

namespace damsl {

// Class-indexed collection of fixed feature vectors for one domain.
struct FeatureBank {
  struct ClassData {
    std::string label;
    DenseMatrix features;  // rows = samples, cols = dim
  };
  std::size_t dim = 0;
  std::string domain_name;
  std::vector<ClassData> classes;

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& c : classes) n += c.features.rows;
    return n;
  }

  void validate() const {
    std::map<std::string, int> seen;
    for (const auto& c : classes) {
      if (c.features.rows == 0)
        throw config_error("feature bank: class '" + c.label + "' has no samples");
      if (c.features.cols != dim)
        throw shape_error("feature bank: class '" + c.label + "' has width " +
                          std::to_string(c.features.cols) + ", bank dim " +
                          std::to_string(dim));
      if (++seen[c.label] > 1)
        throw config_error("feature bank: duplicate class label '" + c.label + "'");
    }
  }
};

// CSV rows: class_label,f0,...,f{D-1}. Lines starting with '#' are comments.
inline FeatureBank load_feature_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open feature bank file: " + path);

  FeatureBank bank;
  bank.domain_name = path;
  std::map<std::string, std::size_t> class_index;
  std::vector<std::vector<double>> rows_by_class_storage;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2)
      throw format_error(path + ":" + std::to_string(line_no) + ": expected label and features");
    const std::size_t row_dim = fields.size() - 1;
    if (bank.dim == 0) {
      bank.dim = row_dim;
    } else if (row_dim != bank.dim) {
      throw format_error(path + ":" + std::to_string(line_no) + ": row has " +
                         std::to_string(row_dim) + " features, expected " +
                         std::to_string(bank.dim));
    }
    std::vector<double> vals(row_dim);
    for (std::size_t i = 0; i < row_dim; ++i) {
      const std::string& s = fields[i + 1];
      std::size_t pos = 0;
      try {
        vals[i] = std::stod(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != s.size())
        throw format_error(path + ":" + std::to_string(line_no) + ": unparseable float '" +
                           s + "'");
    }
    auto it = class_index.find(fields[0]);
    std::size_t ci;
    if (it == class_index.end()) {
      ci = bank.classes.size();
      class_index.emplace(fields[0], ci);
      bank.classes.push_back({fields[0], DenseMatrix(0, bank.dim)});
    } else {
      ci = it->second;
    }
    auto& feats = bank.classes[ci].features;
    feats.rows += 1;
    feats.data.insert(feats.data.end(), vals.begin(), vals.end());
  }
  if (bank.classes.empty()) throw format_error(path + ": no data rows");
  bank.validate();
  return bank;
}

// 17 significant digits round-trip IEEE doubles exactly.
inline void save_feature_bank(const FeatureBank& bank, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot write feature bank file: " + path);
  out << "# feature bank: " << bank.domain_name << "\n";
  char buf[40];
  for (const auto& c : bank.classes) {
    for (std::size_t r = 0; r < c.features.rows; ++r) {
      out << c.label;
      for (std::size_t d = 0; d < bank.dim; ++d) {
        std::snprintf(buf, sizeof(buf), ",%.17g", c.features(r, d));
        out << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw format_error("write failed: " + path);
}

// Desk-scale stand-in for a shifted test domain: the base class geometry is
// shared (same seed), the shift rotates / translates class means and scales
// the within-class noise.
struct DomainShift {
  double rotation = 0.0;            // 0 = identity, 1 = full random rotation
  double translation_stddev = 0.0;  // per-class mean translation
  double stddev_multiplier = 1.0;
};

// Target-domain presets in order of decreasing similarity to the source.
inline DomainShift shift_preset(const std::string& name) {
  if (name == "identity") return {0.0, 0.0, 1.0};
  if (name == "near") return {0.15, 0.3, 1.15};
  if (name == "mid") return {0.5, 1.0, 1.4};
  if (name == "far") return {1.0, 2.0, 1.8};
  throw config_error("unknown shift preset '" + name + "' (identity, near, mid, far)");
}

struct SyntheticDomainSpec {
  std::size_t n_classes = 20;
  std::size_t dim = 32;
  double mean_scale = 1.0;
  double within_stddev = 1.0;
  // Stddev of the per-class log-normal noise multipliers: class c's noise is
  // scaled by exp(N(0, class_noise_sigma)), drawn from a seed-only stream so
  // every shifted variant of a domain shares the same class difficulties.
  double class_noise_sigma = 1.0;
  DomainShift shift;

  void validate() const {
    if (n_classes == 0 || dim == 0) throw config_error("synthetic spec: empty domain");
    if (within_stddev <= 0.0) throw config_error("synthetic spec: within_stddev must be > 0");
    if (class_noise_sigma < 0.0)
      throw config_error("synthetic spec: class_noise_sigma must be >= 0");
    if (shift.stddev_multiplier <= 0.0)
      throw config_error("synthetic spec: stddev multiplier must be > 0");
    if (shift.rotation < 0.0 || shift.rotation > 1.0)
      throw config_error("synthetic spec: rotation strength must lie in [0,1]");
    if (shift.translation_stddev < 0.0)
      throw config_error("synthetic spec: translation stddev must be >= 0");
  }
};

namespace detail {

// Fixed anisotropy profile: per-dimension noise scales spread geometrically
// from 0.25 to 4.0, shared by all classes and all shifted variants. Nearest
// centroid in raw feature space treats dimensions uniformly; trained heads
// can downweight the noisy ones.
inline std::vector<double> noise_profile(std::size_t dim) {
  std::vector<double> s(dim, 1.0);
  if (dim == 1) return s;
  for (std::size_t d = 0; d < dim; ++d)
    s[d] = 0.3 * std::pow(9.0, static_cast<double>(d) / static_cast<double>(dim - 1));
  return s;
}

inline std::vector<std::vector<double>> random_rotation(std::size_t dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) g(r, c) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t d = 0; d < dim; ++d)
    if (rmat(d, d) < 0) q.col(d) = -q.col(d);
  std::vector<std::vector<double>> out(dim, std::vector<double>(dim));
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) out[r][c] = q(r, c);
  return out;
}

}  // namespace detail

inline FeatureBank gen_synthetic_domain(const SyntheticDomainSpec& spec,
                                        std::size_t samples_per_class, std::uint64_t seed,
                                        const std::string& domain_name = "synthetic") {
  spec.validate();
  if (samples_per_class == 0) throw config_error("synthetic spec: samples_per_class == 0");

  const std::size_t dim = spec.dim;
  Rng base(seed);

  // Base class means depend only on (seed, n_classes, dim, mean_scale), so
  // shifted variants generated with the same seed share their geometry.
  Rng mean_rng = base.split("class-means");
  std::vector<std::vector<double>> means(spec.n_classes, std::vector<double>(dim));
  for (auto& m : means)
    for (double& v : m) v = mean_rng.gaussian(0.0, spec.mean_scale);

  Rng shift_rng = base.split("shift");
  if (spec.shift.rotation > 0.0) {
    const auto q = detail::random_rotation(dim, shift_rng);
    const double rho = spec.shift.rotation;
    for (auto& m : means) {
      double norm0 = 0.0;
      for (double v : m) norm0 += v * v;
      norm0 = std::sqrt(norm0);
      std::vector<double> blended(dim, 0.0);
      for (std::size_t r = 0; r < dim; ++r) {
        double rot = 0.0;
        for (std::size_t c = 0; c < dim; ++c) rot += q[r][c] * m[c];
        blended[r] = (1.0 - rho) * m[r] + rho * rot;
      }
      double norm1 = 0.0;
      for (double v : blended) norm1 += v * v;
      norm1 = std::sqrt(norm1);
      // Blending shrinks vectors; keep class separation comparable.
      const double rescale = norm1 > 0.0 ? norm0 / norm1 : 1.0;
      for (std::size_t d = 0; d < dim; ++d) m[d] = blended[d] * rescale;
    }
  }
  if (spec.shift.translation_stddev > 0.0) {
    for (auto& m : means) {
      double norm0 = 0.0;
      for (double v : m) norm0 += v * v;
      norm0 = std::sqrt(norm0);
      for (double& v : m) v += shift_rng.gaussian(0.0, spec.shift.translation_stddev);
      double norm1 = 0.0;
      for (double v : m) norm1 += v * v;
      norm1 = std::sqrt(norm1);
      // Translation relocates means; rescaling keeps class separation
      // comparable so the stddev multiplier controls difficulty.
      if (norm1 > 0.0)
        for (double& v : m) v *= norm0 / norm1;
    }
  }

  const auto profile = detail::noise_profile(dim);
  const double noise_scale = spec.within_stddev * spec.shift.stddev_multiplier;

  // Per-class noise multipliers (log-normal, fixed spread) make episode
  // difficulty heterogeneous: a 5-way draw mixes tight and diffuse classes.
  // The stream depends only on the seed, so shifted variants of the same
  // base domain keep each class's relative difficulty.
  Rng class_noise_rng = base.split("class-noise");
  std::vector<double> class_mult(spec.n_classes);
  for (double& m : class_mult) m = std::exp(class_noise_rng.gaussian(0.0, spec.class_noise_sigma));

  Rng sample_rng = base.split("samples:" + domain_name);
  FeatureBank bank;
  bank.dim = dim;
  bank.domain_name = domain_name;
  bank.classes.reserve(spec.n_classes);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    FeatureBank::ClassData cd;
    cd.label = "class" + std::to_string(c);
    cd.features = DenseMatrix(samples_per_class, dim);
    for (std::size_t r = 0; r < samples_per_class; ++r)
      for (std::size_t d = 0; d < dim; ++d)
        cd.features(r, d) =
            means[c][d] + sample_rng.gaussian(0.0, noise_scale * class_mult[c] * profile[d]);
    bank.classes.push_back(std::move(cd));
  }
  bank.validate();
  return bank;
}

}  // namespace damsl
