// Command-line front end: synthetic data generation, training, evaluation
// and benchmark grids over feature-bank CSVs.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "damsl/damsl.hpp"

namespace fs = std::filesystem;
using namespace damsl;

namespace {

// Flags collected as strings so that "flag overrides config file" is uniform.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::string config_path;

  void add_option(CLI::App* cmd, const std::string& flag, const std::string& key,
                  const std::string& desc) {
    auto* opt = cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, desc);
    opt->take_last();
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) load_config_file(cfg, config_path);
    for (const auto& [k, v] : values) cfg.set(k, v);
    return cfg;
  }
};

void add_common_flags(CLI::App* cmd, FlagSet& flags) {
  cmd->add_option("--config", flags.config_path, "flat key = value config file");
  flags.add_option(cmd, "--variant", "variant", "model variant tag");
  flags.add_option(cmd, "--source", "source", "source-domain feature bank CSV");
  flags.add_option(cmd, "--target", "target", "target-domain feature bank CSV");
  flags.add_option(cmd, "--n-way", "n_way", "classes per episode");
  flags.add_option(cmd, "--k-shot", "k_shot", "support samples per class");
  flags.add_option(cmd, "--n-query", "n_query", "query samples per class");
  flags.add_option(cmd, "--episodes", "episodes", "meta-training episodes");
  flags.add_option(cmd, "--eval-episodes", "eval_episodes", "evaluation episodes");
  flags.add_option(cmd, "--seed", "seed", "random seed");
  flags.add_option(cmd, "--out", "out", "output path");
  flags.add_option(cmd, "--checkpoint", "checkpoint", "checkpoint path");
  flags.add_option(cmd, "--jitter", "jitter", "feature jitter stddev during fine-tuning");
  flags.add_option(cmd, "--classes", "classes", "synthetic: class count");
  flags.add_option(cmd, "--dim", "dim", "synthetic: feature dimension");
  flags.add_option(cmd, "--per-class", "per_class", "synthetic: samples per class");
  flags.add_option(cmd, "--mean-scale", "mean_scale", "synthetic: class-mean scale");
  flags.add_option(cmd, "--stddev", "stddev", "synthetic: within-class stddev");
  flags.add_option(cmd, "--class-noise-sigma", "class_noise_sigma",
                   "synthetic: stddev of per-class log-normal noise multipliers");
  flags.add_option(cmd, "--grad-clip", "grad_clip", "fine-tuning global-norm gradient clip");
  flags.add_option(cmd, "--edge-hidden", "edge_hidden", "edge MLP hidden widths (comma list)");
  flags.add_option(cmd, "--conv-width", "conv_width", "graph conv output width");
  flags.add_option(cmd, "--gnn-layers", "gnn_layers", "metric module layer count");
  flags.add_option(cmd, "--learned-projection", "learned_projection",
                   "learned score projection (true/false)");
  flags.add_option(cmd, "--ft-epochs", "ft_epochs", "fine-tuning epochs");
  flags.add_option(cmd, "--ft-batch", "ft_batch", "fine-tuning batch size");
  flags.add_option(cmd, "--ft-lr", "ft_lr", "fine-tuning learning rate");
  flags.add_option(cmd, "--metric-lr", "metric_lr", "metric module learning rate");
  flags.add_option(cmd, "--pretrain-epochs", "pretrain_epochs", "supervised pretrain epochs");
  flags.add_option(cmd, "--fomaml-episodes", "fomaml_episodes", "first-order MAML episodes");
}

void echo_config(const RunConfig& cfg) {
  for (const auto& [k, v] : cfg.items()) std::cout << "config: " << k << " = " << v << "\n";
}

int cmd_gen_data(const RunConfig& cfg) {
  echo_config(cfg);
  const std::string out_dir = cfg.out.empty() ? "data" : cfg.out;
  fs::create_directories(out_dir);

  SyntheticDomainSpec spec;
  spec.n_classes = cfg.classes;
  spec.dim = cfg.dim;
  spec.mean_scale = cfg.mean_scale;
  spec.within_stddev = cfg.stddev;
  spec.class_noise_sigma = cfg.class_noise_sigma;

  const std::vector<std::pair<std::string, std::string>> domains = {
      {"source", "identity"}, {"near", "near"}, {"mid", "mid"}, {"far", "far"}};
  for (const auto& [name, preset] : domains) {
    spec.shift = shift_preset(preset);
    const FeatureBank bank = gen_synthetic_domain(spec, cfg.per_class, cfg.seed, name);
    const std::string path = out_dir + "/" + (name == "source" ? "source.csv" : "target_" + name + ".csv");
    save_feature_bank(bank, path);
    std::cout << path << ":";
    for (const auto& c : bank.classes) std::cout << " " << c.label << "=" << c.features.rows;
    std::cout << "\n";
  }
  return 0;
}

Model train_model(const RunConfig& cfg, const FeatureBank& source,
                  std::vector<double>* losses) {
  const VariantTag tag = parse_variant(cfg.variant);
  const EngineConfig engine = cfg.engine_config();
  Rng init_rng = Rng(cfg.seed).split("init");
  Model model = init_model(tag, source.dim, cfg.n_way, engine, init_rng);
  Rng pre_rng = Rng(cfg.seed).split("pretrain");
  pretrain_encoders(model, source, engine, pre_rng);
  if (model.has_metric || model.has_sproto) {
    Rng meta_rng = Rng(cfg.seed).split("meta");
    std::vector<double> l = meta_train(model, source, cfg.episodes, engine, meta_rng);
    if (losses) *losses = std::move(l);
  }
  return model;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.variant.empty()) throw config_error("train: --variant is required");
  if (cfg.source.empty()) throw config_error("train: --source is required");
  echo_config(cfg);
  const FeatureBank source = load_feature_bank(cfg.source);
  std::vector<double> losses;
  const Model model = train_model(cfg, source, &losses);
  const std::string out = cfg.out.empty() ? "model.ckpt" : cfg.out;
  checkpoint_save(model, out);
  std::ofstream log(out + ".log");
  for (std::size_t i = 0; i < losses.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g", i, losses[i]);
    log << buf << "\n";
  }
  std::cout << "checkpoint: " << out << " (" << losses.size() << " training episodes)\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw config_error("eval: --checkpoint is required");
  if (cfg.target.empty()) throw config_error("eval: --target is required");
  echo_config(cfg);
  const Model model = checkpoint_load(cfg.checkpoint);
  const FeatureBank target = load_feature_bank(cfg.target);
  const EngineConfig engine = cfg.engine_config();
  Rng eval_rng = Rng(cfg.seed).split("eval");
  const EvalReport report = evaluate(model, target, engine.protocol, cfg.eval_episodes,
                                     engine.fine_tune, eval_rng);
  std::cout << variant_name(model.tag) << " on " << cfg.target << ": "
            << format_cell(report.mean, report.ci95) << "\n";
  if (!cfg.out.empty()) {
    std::ofstream out(cfg.out);
    out << csv_header() << "\n" << csv_row(report, target.domain_name) << "\n";
  }
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_benchmark(const RunConfig& cfg, const std::string& variants_arg,
                  const std::string& targets_arg, const std::string& shots_arg) {
  if (cfg.source.empty()) throw config_error("benchmark: --source is required");
  const std::vector<std::string> variants = split_list(variants_arg);
  const std::vector<std::string> targets = split_list(targets_arg);
  const std::vector<std::string> shots = split_list(shots_arg);
  if (variants.empty()) throw config_error("benchmark: empty variant list");
  if (targets.empty()) throw config_error("benchmark: empty target list");
  if (shots.empty()) throw config_error("benchmark: empty shot list");
  echo_config(cfg);

  const FeatureBank source = load_feature_bank(cfg.source);
  std::vector<FeatureBank> banks;
  for (const auto& t : targets) banks.push_back(load_feature_bank(t));

  std::ofstream csv;
  if (!cfg.out.empty()) {
    csv.open(cfg.out);
    csv << csv_header() << "\n";
  }

  // rows: variants; columns: target x shot
  std::vector<std::vector<std::string>> cells(variants.size());
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (const auto& shot : shots) {
      RunConfig run = cfg;
      run.variant = variants[vi];
      run.k_shot = detail::parse_count("k_shot", shot);
      Model model;
      bool trained = false;
      std::string train_err;
      try {
        model = train_model(run, source, nullptr);
        trained = true;
      } catch (const std::exception& e) {
        train_err = e.what();
      }
      for (std::size_t ti = 0; ti < banks.size(); ++ti) {
        std::string cell;
        try {
          if (!trained) throw config_error(train_err);
          const EngineConfig engine = run.engine_config();
          Protocol proto = engine.protocol;
          Rng eval_rng = Rng(run.seed).split("eval:" + targets[ti] + ":" + shot);
          const EvalReport report =
              evaluate(model, banks[ti], proto, run.eval_episodes, engine.fine_tune, eval_rng);
          cell = format_cell(report.mean, report.ci95);
          if (csv.is_open()) csv << csv_row(report, banks[ti].domain_name) << "\n";
        } catch (const std::exception& e) {
          cell = std::string("FAIL: ") + e.what();
          std::cerr << "cell (" << variants[vi] << ", " << targets[ti] << ", " << shot
                    << "-shot) failed: " << e.what() << "\n";
        }
        cells[vi].push_back(cell);
      }
    }
  }

  std::cout << "\nvariant";
  for (const auto& shot : shots)
    for (const auto& t : targets) std::cout << "\t" << t << " " << cfg.n_way << "w" << shot << "s";
  std::cout << "\n";
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    std::cout << variants[vi];
    for (const auto& cell : cells[vi]) std::cout << "\t" << cell;
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain few-shot learning over feature banks"};
  app.require_subcommand(1);

  FlagSet gen_flags, train_flags, eval_flags, bench_flags;
  auto* gen = app.add_subcommand("gen-data", "generate source + shifted target banks");
  add_common_flags(gen, gen_flags);
  auto* train = app.add_subcommand("train", "pretrain encoders and meta-train the metric");
  add_common_flags(train, train_flags);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a target bank");
  add_common_flags(eval, eval_flags);
  auto* bench = app.add_subcommand("benchmark", "variant x shot x domain grid");
  add_common_flags(bench, bench_flags);
  std::string variants_arg = "protonet,lensem_v2,damsl_v2";
  std::string targets_arg;
  std::string shots_arg = "5";
  bench->add_option("--variants", variants_arg, "comma list of variant tags");
  bench->add_option("--targets", targets_arg, "comma list of target bank CSVs");
  bench->add_option("--shots", shots_arg, "comma list of k_shot values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags.resolve());
    if (train->parsed()) return cmd_train(train_flags.resolve());
    if (eval->parsed()) return cmd_eval(eval_flags.resolve());
    if (bench->parsed()) {
      if (targets_arg.empty()) throw config_error("benchmark: --targets is required");
      return cmd_benchmark(bench_flags.resolve(), variants_arg, targets_arg, shots_arg);
    }
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const protocol_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
