#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "damsl/engine.hpp"
#include "damsl/errors.hpp"

namespace damsl {

// Versioned binary checkpoint. Little-endian integers and 64-bit floats;
// every parameter block is length-prefixed, so truncation is always caught.
namespace ckpt {

constexpr char kMagic[] = "DAMSLCKPT1";
constexpr std::uint32_t kVersion = 1;

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  write_bytes(out, v.data(), v.size() * sizeof(double));
}

inline void write_layer(std::ostream& out, const LayerParams& layer) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weights.rows));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weights.cols));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(layer.activation));
  write_pod<double>(out, layer.leaky_slope);
  write_doubles(out, layer.weights.data);
  write_doubles(out, layer.biases);
}

inline void write_mlp(std::ostream& out, const Mlp& net) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.size()));
  for (const auto& layer : net) write_layer(out, layer);
}

inline void read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw format_error("checkpoint truncated");
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  read_bytes(in, &v, sizeof(T));
  return v;
}

inline std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > (1u << 20)) throw format_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

inline std::vector<double> read_doubles(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n > (1ull << 32)) throw format_error("checkpoint: implausible block length");
  std::vector<double> v(n);
  read_bytes(in, v.data(), n * sizeof(double));
  return v;
}

inline LayerParams read_layer(std::istream& in) {
  LayerParams layer;
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  const auto act = read_pod<std::uint8_t>(in);
  if (act > static_cast<std::uint8_t>(Activation::tanh_act))
    throw format_error("checkpoint: invalid activation tag");
  layer.activation = static_cast<Activation>(act);
  layer.leaky_slope = read_pod<double>(in);
  layer.weights = DenseMatrix(rows, cols);
  layer.weights.data = read_doubles(in);
  if (layer.weights.data.size() != rows * cols)
    throw format_error("checkpoint: weight block size mismatch");
  layer.biases = read_doubles(in);
  if (layer.biases.size() != cols)
    throw format_error("checkpoint: bias block size mismatch");
  return layer;
}

inline Mlp read_mlp(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > 1024) throw format_error("checkpoint: implausible layer count");
  Mlp net;
  for (std::uint32_t i = 0; i < n; ++i) net.push_back(read_layer(in));
  return net;
}

}  // namespace ckpt

inline void checkpoint_save(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot write checkpoint: " + path);
  using namespace ckpt;
  write_bytes(out, kMagic, sizeof(kMagic) - 1);
  write_pod<std::uint32_t>(out, kVersion);
  write_string(out, variant_name(model.tag));
  write_pod<std::uint64_t>(out, model.feature_dim);
  write_pod<std::uint64_t>(out, model.n_way);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.encoders.size()));
  for (const auto& enc : model.encoders) {
    write_pod<std::uint8_t>(out, enc.optimizer_kind == OptKind::adam ? 1 : 0);
    write_mlp(out, enc.adapter);
    write_layer(out, enc.classifier);
  }
  write_pod<std::uint8_t>(out, model.has_metric ? 1 : 0);
  if (model.has_metric) {
    const MetricNetConfig& c = model.metric.cfg;
    write_pod<std::uint64_t>(out, c.score_width);
    write_pod<std::uint64_t>(out, c.n_way);
    write_pod<std::uint64_t>(out, c.n_layers);
    write_pod<std::uint64_t>(out, c.conv_width);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(c.edge_hidden.size()));
    for (std::size_t h : c.edge_hidden) write_pod<std::uint64_t>(out, h);
    write_pod<std::uint8_t>(out, c.learned_projection ? 1 : 0);
    write_pod<double>(out, c.leaky_slope);
    if (c.learned_projection) write_layer(out, model.metric.projection);
    for (const auto& layer : model.metric.layers) {
      write_mlp(out, layer.edge_mlp);
      write_layer(out, layer.theta_self);
      write_layer(out, layer.theta_adj);
    }
    write_layer(out, model.metric.output_head);
  }
  write_pod<std::uint8_t>(out, model.has_sproto ? 1 : 0);
  if (model.has_sproto) write_mlp(out, model.sproto.embed);
  if (!out) throw format_error("checkpoint write failed: " + path);
}

inline Model checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open checkpoint: " + path);
  using namespace ckpt;
  char magic[sizeof(kMagic) - 1];
  read_bytes(in, magic, sizeof(magic));
  if (std::string(magic, sizeof(magic)) != kMagic)
    throw format_error("not a DAMSL checkpoint: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw format_error("checkpoint version mismatch: found " + std::to_string(version) +
                       ", expected " + std::to_string(kVersion));
  Model model;
  model.tag = parse_variant(read_string(in));
  model.feature_dim = read_pod<std::uint64_t>(in);
  model.n_way = read_pod<std::uint64_t>(in);
  const auto n_enc = read_pod<std::uint32_t>(in);
  if (n_enc > 16) throw format_error("checkpoint: implausible encoder count");
  for (std::uint32_t i = 0; i < n_enc; ++i) {
    EncoderHead enc;
    enc.optimizer_kind = read_pod<std::uint8_t>(in) ? OptKind::adam : OptKind::sgd_momentum;
    enc.adapter = read_mlp(in);
    enc.classifier = read_layer(in);
    model.encoders.push_back(std::move(enc));
  }
  model.has_metric = read_pod<std::uint8_t>(in) != 0;
  if (model.has_metric) {
    MetricNetConfig c;
    c.score_width = read_pod<std::uint64_t>(in);
    c.n_way = read_pod<std::uint64_t>(in);
    c.n_layers = read_pod<std::uint64_t>(in);
    c.conv_width = read_pod<std::uint64_t>(in);
    const auto nh = read_pod<std::uint32_t>(in);
    if (nh > 64) throw format_error("checkpoint: implausible edge hidden count");
    c.edge_hidden.clear();
    for (std::uint32_t i = 0; i < nh; ++i) c.edge_hidden.push_back(read_pod<std::uint64_t>(in));
    c.learned_projection = read_pod<std::uint8_t>(in) != 0;
    c.leaky_slope = read_pod<double>(in);
    model.metric.cfg = c;
    if (c.learned_projection) model.metric.projection = read_layer(in);
    for (std::size_t k = 0; k < c.n_layers; ++k) {
      GraphConvLayer layer;
      layer.edge_mlp = read_mlp(in);
      layer.theta_self = read_layer(in);
      layer.theta_adj = read_layer(in);
      model.metric.layers.push_back(std::move(layer));
    }
    model.metric.output_head = read_layer(in);
  }
  model.has_sproto = read_pod<std::uint8_t>(in) != 0;
  if (model.has_sproto) model.sproto.embed = read_mlp(in);
  return model;
}

}  // namespace damsl
