// ftx: command line front end for the ftimexer forecaster.
//
// Subcommands: synth, train, eval, ablate, robustness. Every run resolves a
// single JSON config (defaults <- config file <- --set overrides <- --seed)
// and writes the resolved snapshot next to its outputs, so any run can be
// reproduced from the artifacts alone.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ftx/config.hpp"
#include "ftx/data.hpp"
#include "ftx/errors.hpp"
#include "ftx/metrics.hpp"
#include "ftx/model.hpp"
#include "ftx/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json default_run_config() {
  return json{{"data", ftx::data::to_json(ftx::data::DatasetManifest{})},
              {"synth", ftx::data::to_json(ftx::data::SynthSpec{})},
              {"model", ftx::to_json(ftx::ModelConfig{})},
              {"training", ftx::to_json(ftx::TrainingConfig{})},
              {"out_dir", ""}};
}

// Merge a config file over the defaults, rejecting unknown keys so typos
// surface as errors instead of silently keeping the default.
void merge_config(json& base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) {
    throw ftx::ConfigError(prefix.empty()
                               ? "config root must be a JSON object"
                               : prefix + ": expected a JSON object");
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) {
      throw ftx::ConfigError(path + ": unknown config key");
    }
    if (base[key].is_object() && !base[key].empty()) {
      merge_config(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

json load_run_config(const std::string& path) {
  json cfg = default_run_config();
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ftx::ConfigError("--config: cannot open '" + path + "'");
  json file;
  try {
    in >> file;
  } catch (const json::exception& e) {
    throw ftx::ConfigError("--config: '" + path + "' is not valid JSON: " +
                           e.what());
  }
  merge_config(cfg, file, "");
  return cfg;
}

// Convenience shorthands for common leaves. Everything else uses the full
// dotted path into the run config.
const std::vector<std::pair<std::string, std::string>> kSetAliases = {
    {"p", "model.mask_p"},         {"mask_p", "model.mask_p"},
    {"lambda", "model.lambda"},    {"lr", "training.lr"},
    {"epochs", "training.epochs"}, {"seed", "training.seed"},
};

void apply_set(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ftx::ConfigError("--set expects key=value, got '" + kv + "'");
  }
  std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);

  if (key.find('.') == std::string::npos) {
    for (const auto& [alias, full] : kSetAliases) {
      if (key == alias) {
        key = full;
        break;
      }
    }
  }

  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part =
        key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ftx::ConfigError("--set: unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) {
    throw ftx::ConfigError("--set: '" + key + "' is a section, not a value");
  }

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings, e.g. --set data.csv_path=series.csv
  }
  if (value.is_string() && !node->is_string()) {
    throw ftx::ConfigError("--set: '" + key + "' expects a " +
                           std::string(node->type_name()) + ", got '" + raw +
                           "'");
  }
  *node = value;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_flag;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run config JSON file");
  cmd->add_option("--set", args.sets,
                  "Override a config value, key=value with dotted paths");
  cmd->add_option("--seed", args.seed, "Override the run seed");
  cmd->add_option("--out", args.out_flag, "Output root directory");
}

json resolve_config(const CommonArgs& args) {
  json cfg = load_run_config(args.config_path);
  for (const auto& kv : args.sets) apply_set(cfg, kv);
  if (args.seed) {
    cfg["training"]["seed"] = *args.seed;
    cfg["synth"]["seed"] = *args.seed;
  }
  return cfg;
}

fs::path resolve_out_root(const CommonArgs& args, const json& cfg) {
  if (!args.out_flag.empty()) return args.out_flag;
  const std::string from_cfg = cfg.at("out_dir").get<std::string>();
  if (!from_cfg.empty()) return from_cfg;
  if (const char* env = std::getenv("FTX_OUT_DIR"); env && *env) return env;
  return "ftx_out";
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ftx::DataError("cannot open '" + path.string() + "'");
  out << content;
}

void write_resolved(const json& cfg, const fs::path& dir) {
  write_text(dir / "resolved_config.json", cfg.dump(2) + "\n");
}

ftx::data::Dataset load_dataset(const json& cfg,
                                ftx::data::DatasetManifest& manifest) {
  manifest = ftx::data::manifest_from_json(cfg.at("data"));
  if (manifest.csv_path.empty()) {
    throw ftx::ConfigError("data.csv_path: required (run synth first or "
                           "point it at a CSV)");
  }
  ftx::data::SchemaSpec schema;
  schema.timestamp_col = manifest.timestamp_col;
  schema.endo_cols = manifest.endo_cols;
  schema.exo_cols = manifest.exo_cols;
  ftx::data::RawSeries s = ftx::data::ingest_csv(manifest.csv_path, schema);
  if (!s.rejected_lines.empty()) {
    std::cerr << "note: ingest rejected " << s.rejected_lines.size()
              << " malformed line(s) of '" << manifest.csv_path << "'\n";
  }
  return ftx::data::prepare_dataset(s, manifest.lookback, manifest.horizon,
                                    manifest.train_frac);
}

// The window geometry and variable counts come from the data section; the
// model section only chooses the architecture. The resolved snapshot keeps
// the derived values.
ftx::ModelConfig resolve_model_config(json& cfg,
                                      const ftx::data::DatasetManifest& m,
                                      const ftx::data::Dataset& ds) {
  ftx::ModelConfig mc = ftx::model_config_from_json(cfg.at("model"));
  mc.lookback = m.lookback;
  mc.d_endo = ds.d_endo;
  mc.d_exo = ds.d_exo;
  mc.validate();
  cfg["model"] = ftx::to_json(mc);
  return mc;
}

int cmd_synth(json cfg, const fs::path& out_root) {
  const ftx::data::SynthSpec spec =
      ftx::data::synth_spec_from_json(cfg.at("synth"));
  const fs::path dir = out_root / "synth";
  fs::create_directories(dir);

  ftx::data::SynthTruth truth;
  ftx::data::RawSeries series = ftx::data::synth_generate(spec, &truth);
  const fs::path csv = dir / "series.csv";
  ftx::data::write_csv(series, csv.string());

  json sidecar{{"periods", truth.periods},
               {"amplitudes", truth.amplitudes},
               {"noise_sigma", truth.noise_sigma},
               {"driver_scale", truth.driver_scale}};
  write_text(dir / "series_truth.json", sidecar.dump(2) + "\n");

  // Point the data section at the fresh file so the snapshot is train-ready.
  cfg["data"]["csv_path"] = csv.string();
  cfg["data"]["timestamp_col"] = "timestamp";
  cfg["data"]["endo_cols"] = series.endo_names;
  cfg["data"]["exo_cols"] = series.exo_names;
  write_resolved(cfg, dir);

  std::cout << "synth: wrote " << series.rows() << " rows to " << csv.string()
            << "\n";
  std::cout << "synth: truth sidecar lists periods";
  for (double p : truth.periods) std::cout << " " << p;
  std::cout << "\n";
  return 0;
}

int cmd_train(json cfg, const fs::path& out_root) {
  const fs::path dir = out_root / "train";
  fs::create_directories(dir);

  ftx::data::DatasetManifest manifest;
  ftx::data::Dataset ds = load_dataset(cfg, manifest);
  const ftx::ModelConfig mc = resolve_model_config(cfg, manifest, ds);
  ftx::TrainingConfig tc = ftx::training_config_from_json(cfg.at("training"));
  tc.validate();

  ftx::FTimeXerModel model(mc, tc.seed);
  const ftx::training::FitResult fit = ftx::training::fit(
      model, ds.train, tc, (dir / "training_log.jsonl").string());

  const fs::path ckpt = dir / "model.ckpt";
  ftx::save_checkpoint(model, ckpt.string());
  write_resolved(cfg, dir);

  std::cout << "train: " << fit.log.size() << " epochs, " << fit.steps
            << " steps on " << ds.train.size() << " windows\n";
  if (fit.best_epoch > 0) {
    std::cout << "train: best validation mse " << fit.best_val_mse
              << " at epoch " << fit.best_epoch
              << (fit.early_stopped ? " (stopped early)" : "") << "\n";
  }
  std::cout << "train: checkpoint " << ckpt.string() << "\n";
  return 0;
}

int cmd_eval(json cfg, const fs::path& out_root, const std::string& ckpt_flag,
             bool train_split, bool plot) {
  const fs::path ckpt =
      ckpt_flag.empty() ? out_root / "train" / "model.ckpt" : fs::path(ckpt_flag);
  ftx::FTimeXerModel model = ftx::load_checkpoint(ckpt.string());

  ftx::data::DatasetManifest manifest;
  ftx::data::Dataset ds = load_dataset(cfg, manifest);
  cfg["model"] = ftx::to_json(model.config());

  const fs::path dir = out_root / "eval";
  fs::create_directories(dir);
  const std::string suffix = train_split ? "_train" : "";

  ftx::eval::EvalReport report = ftx::eval::evaluate(model, ds, train_split);
  const auto& windows = train_split ? ds.train : ds.test;
  ftx::eval::SeriesPair series =
      ftx::eval::predict_denormalized(model, windows, ds.normalizer);

  write_text(dir / ("report" + suffix + ".csv"), ftx::eval::report_csv(report));
  const std::string table = ftx::eval::report_table(report);
  write_text(dir / ("report" + suffix + ".txt"), table);
  write_text(dir / ("predictions" + suffix + ".csv"),
             ftx::eval::prediction_csv(series));
  if (plot) {
    write_text(dir / ("forecast" + suffix + ".svg"),
               ftx::eval::line_chart_svg(
                   series, "truth vs prediction (" + report.label + ")"));
  }
  write_text(dir / ("report" + suffix + ".json"),
             ftx::eval::to_json(report).dump(2) + "\n");
  write_resolved(cfg, dir);

  std::cout << table;
  std::cout << "eval: wrote report" << suffix << ".csv, predictions" << suffix
            << ".csv in " << dir.string() << "\n";
  return 0;
}

int cmd_ablate(json cfg, const fs::path& out_root,
               const std::vector<std::uint64_t>& seeds, bool no_freq_cell) {
  const fs::path dir = out_root / "ablate";
  fs::create_directories(dir);

  ftx::data::DatasetManifest manifest;
  ftx::data::Dataset ds = load_dataset(cfg, manifest);
  const ftx::ModelConfig mc = resolve_model_config(cfg, manifest, ds);
  ftx::TrainingConfig tc = ftx::training_config_from_json(cfg.at("training"));
  tc.validate();

  ftx::eval::AblationOptions opts;
  opts.seeds = seeds;
  opts.training = tc;
  opts.out_dir = dir.string();
  const auto grid = ftx::eval::default_ablation_grid(mc, no_freq_cell);
  const auto runs = ftx::eval::run_ablation_grid(ds, grid, opts);

  write_text(dir / "ablation.csv", ftx::eval::ablation_csv(runs));
  const std::string table = ftx::eval::ablation_table(runs);
  write_text(dir / "ablation.txt", table);
  write_resolved(cfg, dir);

  std::size_t resumed = 0;
  for (const auto& r : runs) resumed += r.resumed ? 1 : 0;
  std::cout << table;
  std::cout << "ablate: " << runs.size() << " runs (" << resumed
            << " resumed from markers) in " << dir.string() << "\n";
  return 0;
}

int cmd_robustness(json cfg, const fs::path& out_root,
                   const std::string& ckpt_flag) {
  const fs::path ckpt =
      ckpt_flag.empty() ? out_root / "train" / "model.ckpt" : fs::path(ckpt_flag);
  ftx::FTimeXerModel model = ftx::load_checkpoint(ckpt.string());

  ftx::data::DatasetManifest manifest;
  ftx::data::Dataset ds = load_dataset(cfg, manifest);
  cfg["model"] = ftx::to_json(model.config());

  const fs::path dir = out_root / "robustness";
  fs::create_directories(dir);

  const std::vector<double> levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<std::size_t> shifts = {0, 1, 2};
  const std::uint64_t seed = cfg.at("training").at("seed").get<std::uint64_t>();
  const auto points = ftx::eval::robustness_eval(model, ds, levels, shifts, seed);

  const std::string csv = ftx::eval::robustness_csv(points);
  write_text(dir / "robustness.csv", csv);
  write_resolved(cfg, dir);

  std::cout << csv;
  std::cout << "robustness: " << points.size() << " grid points in "
            << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ftimexer: patch attention forecaster with a frequency branch "
               "and exogenous robustness training"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, ablate_args, robust_args;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, synth_args);

  CLI::App* train = app.add_subcommand("train", "Train a model on a dataset");
  add_common(train, train_args);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(eval_cmd, eval_args);
  std::string eval_ckpt;
  bool eval_train_split = false, eval_plot = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt,
                       "Checkpoint file (default <out>/train/model.ckpt)");
  eval_cmd->add_flag("--train-split", eval_train_split,
                     "Evaluate the training split instead of the test split");
  eval_cmd->add_flag("--plot", eval_plot, "Also write an SVG line chart");

  CLI::App* ablate =
      app.add_subcommand("ablate", "Run the robustness ablation grid");
  add_common(ablate, ablate_args);
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3};
  bool ablate_no_freq = false;
  ablate->add_option("--seeds", ablate_seeds,
                     "Seeds, one training run per (cell, seed)");
  ablate->add_flag("--no-freq-baseline", ablate_no_freq,
                   "Add a baseline cell with the frequency branch disabled");

  CLI::App* robust = app.add_subcommand(
      "robustness", "Sweep exogenous corruption against a checkpoint");
  add_common(robust, robust_args);
  std::string robust_ckpt;
  robust->add_option("--checkpoint", robust_ckpt,
                     "Checkpoint file (default <out>/train/model.ckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      json cfg = resolve_config(synth_args);
      return cmd_synth(cfg, resolve_out_root(synth_args, cfg));
    }
    if (train->parsed()) {
      json cfg = resolve_config(train_args);
      return cmd_train(cfg, resolve_out_root(train_args, cfg));
    }
    if (eval_cmd->parsed()) {
      json cfg = resolve_config(eval_args);
      return cmd_eval(cfg, resolve_out_root(eval_args, cfg), eval_ckpt,
                      eval_train_split, eval_plot);
    }
    if (ablate->parsed()) {
      if (ablate_seeds.empty()) {
        throw ftx::ConfigError("--seeds: at least one seed required");
      }
      json cfg = resolve_config(ablate_args);
      return cmd_ablate(cfg, resolve_out_root(ablate_args, cfg), ablate_seeds,
                        ablate_no_freq);
    }
    if (robust->parsed()) {
      json cfg = resolve_config(robust_args);
      return cmd_robustness(cfg, resolve_out_root(robust_args, cfg),
                            robust_ckpt);
    }
  } catch (const ftx::DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ftx::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ftx::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ftx::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
