#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "damsl/engine.hpp"
#include "damsl/errors.hpp"

namespace damsl {

// Flat key/value run settings. Every key has a default except the variant
// and the data source; unknown keys are rejected.
struct RunConfig {
  std::string variant;  // required where a model is involved
  std::string source;
  std::string target;
  std::string checkpoint;
  std::string out;

  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t n_query = 15;
  std::size_t episodes = 500;        // meta-training episodes
  std::size_t eval_episodes = 600;
  std::uint64_t seed = 42;

  std::size_t ft_epochs = 100;
  std::size_t ft_batch = 4;
  double ft_lr = 0.01;
  double jitter = 0.0;

  double grad_clip = 5.0;

  double metric_lr = 0.001;
  std::size_t gnn_layers = 3;
  std::size_t conv_width = 16;
  std::vector<std::size_t> edge_hidden = {64, 32};
  bool learned_projection = false;

  std::size_t pretrain_epochs = 30;
  std::size_t pretrain_batch = 32;
  std::size_t fomaml_episodes = 100;

  std::size_t classes = 20;   // synthetic domain
  std::size_t dim = 32;
  std::size_t per_class = 80;
  double mean_scale = 1.0;
  double stddev = 1.0;
  double class_noise_sigma = 1.0;

  void set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> items() const;

  EngineConfig engine_config() const {
    EngineConfig cfg;
    cfg.protocol = {n_way, k_shot, n_query};
    cfg.fine_tune.epochs = ft_epochs;
    cfg.fine_tune.batch_size = ft_batch;
    cfg.fine_tune.lr = ft_lr;
    cfg.fine_tune.jitter_stddev = jitter;
    cfg.fine_tune.grad_clip = grad_clip;
    cfg.metric_lr = metric_lr;
    cfg.gnn_layers = gnn_layers;
    cfg.conv_width = conv_width;
    cfg.edge_hidden = edge_hidden;
    cfg.learned_projection = learned_projection;
    cfg.pretrain.epochs = pretrain_epochs;
    cfg.pretrain.batch_size = pretrain_batch;
    cfg.pretrain.fomaml_episodes = fomaml_episodes;
    return cfg;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  try {
    const long long n = std::stoll(v);
    if (n < 0) throw config_error(key + ": must be >= 0, got " + v);
    return static_cast<std::size_t>(n);
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error(key + ": not an integer: '" + v + "'");
  }
}

inline double parse_float(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw config_error(key + ": not a number: '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error(key + ": not a boolean: '" + v + "'");
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_count;
  using detail::parse_float;
  if (key == "variant") variant = value;
  else if (key == "source") source = value;
  else if (key == "target") target = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "out") out = value;
  else if (key == "n_way") n_way = parse_count(key, value);
  else if (key == "k_shot") k_shot = parse_count(key, value);
  else if (key == "n_query") n_query = parse_count(key, value);
  else if (key == "episodes") episodes = parse_count(key, value);
  else if (key == "eval_episodes") eval_episodes = parse_count(key, value);
  else if (key == "seed") seed = parse_count(key, value);
  else if (key == "ft_epochs") ft_epochs = parse_count(key, value);
  else if (key == "ft_batch") ft_batch = parse_count(key, value);
  else if (key == "ft_lr") ft_lr = parse_float(key, value);
  else if (key == "jitter") jitter = parse_float(key, value);
  else if (key == "grad_clip") grad_clip = parse_float(key, value);
  else if (key == "metric_lr") metric_lr = parse_float(key, value);
  else if (key == "gnn_layers") gnn_layers = parse_count(key, value);
  else if (key == "conv_width") conv_width = parse_count(key, value);
  else if (key == "edge_hidden") {
    std::vector<std::size_t> widths;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!detail::trim(item).empty()) widths.push_back(parse_count(key, detail::trim(item)));
    if (widths.empty()) throw config_error("edge_hidden: expected comma list of widths");
    edge_hidden = widths;
  }
  else if (key == "learned_projection") learned_projection = parse_bool(key, value);
  else if (key == "pretrain_epochs") pretrain_epochs = parse_count(key, value);
  else if (key == "pretrain_batch") pretrain_batch = parse_count(key, value);
  else if (key == "fomaml_episodes") fomaml_episodes = parse_count(key, value);
  else if (key == "classes") classes = parse_count(key, value);
  else if (key == "dim") dim = parse_count(key, value);
  else if (key == "per_class") per_class = parse_count(key, value);
  else if (key == "mean_scale") mean_scale = parse_float(key, value);
  else if (key == "stddev") stddev = parse_float(key, value);
  else if (key == "class_noise_sigma") class_noise_sigma = parse_float(key, value);
  else throw config_error("unknown config key '" + key + "'");
}

inline std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
  };
  return {
      {"variant", variant},
      {"source", source},
      {"target", target},
      {"checkpoint", checkpoint},
      {"out", out},
      {"n_way", std::to_string(n_way)},
      {"k_shot", std::to_string(k_shot)},
      {"n_query", std::to_string(n_query)},
      {"episodes", std::to_string(episodes)},
      {"eval_episodes", std::to_string(eval_episodes)},
      {"seed", std::to_string(seed)},
      {"ft_epochs", std::to_string(ft_epochs)},
      {"ft_batch", std::to_string(ft_batch)},
      {"ft_lr", num(ft_lr)},
      {"jitter", num(jitter)},
      {"grad_clip", num(grad_clip)},
      {"metric_lr", num(metric_lr)},
      {"gnn_layers", std::to_string(gnn_layers)},
      {"conv_width", std::to_string(conv_width)},
      {"edge_hidden",
       [this] {
         std::string s;
         for (std::size_t w : edge_hidden) s += (s.empty() ? "" : ",") + std::to_string(w);
         return s;
       }()},
      {"learned_projection", learned_projection ? "true" : "false"},
      {"pretrain_epochs", std::to_string(pretrain_epochs)},
      {"pretrain_batch", std::to_string(pretrain_batch)},
      {"fomaml_episodes", std::to_string(fomaml_episodes)},
      {"classes", std::to_string(classes)},
      {"dim", std::to_string(dim)},
      {"per_class", std::to_string(per_class)},
      {"mean_scale", num(mean_scale)},
      {"stddev", num(stddev)},
      {"class_noise_sigma", num(class_noise_sigma)},
  };
}

// Flat `key = value` file with '#' comments.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    cfg.set(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
}

// Table-cell formatting: "85.93% ± 0.68%".
inline std::string format_cell(double mean, double ci95) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%% ± %.2f%%", mean * 100.0, ci95 * 100.0);
  return std::string(buf);
}

inline std::string csv_header() {
  return "variant,domain,n_way,k_shot,n_episodes,mean,ci95,seed";
}

inline std::string csv_row(const EvalReport& report, const std::string& domain) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g", report.mean, report.ci95);
  std::ostringstream row;
  row << variant_name(report.tag) << "," << domain << "," << report.protocol.n_way << ","
      << report.protocol.k_shot << "," << report.n_episodes << "," << buf << ","
      << report.seed;
  return row.str();
}

}  // namespace damsl
