#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "heml/checkpoint_io.hpp"
#include "heml/errors.hpp"
#include "heml/eval.hpp"
#include "heml/hseg.hpp"
#include "heml/manifest.hpp"
#include "heml/metric_tree.hpp"
#include "heml/schedule.hpp"
#include "heml/synthetic.hpp"
#include "heml/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Logger {
  bool verbose = false;

  void event(const std::string& name, ordered_json fields,
             const std::string& human) const {
    if (verbose) {
      fields["event"] = name;
      std::cerr << fields.dump() << "\n";
    } else if (!human.empty()) {
      std::cerr << human << "\n";
    }
  }

  void warnings(const heml::WarningLog& log) const {
    if (!verbose) return;
    for (const auto& w : log.entries) {
      std::cerr << ordered_json{{"event", "warning"},
                                {"code", w.code},
                                {"message", w.message}}
                       .dump()
                << "\n";
    }
  }
};

struct GenArgs {
  std::string out;
  std::string mode = "prototype";
  heml::SyntheticSpec spec;
};

int run_gen(const GenArgs& args, const Logger& log) {
  heml::SyntheticSpec spec = args.spec;
  if (args.mode == "prototype") {
    spec.mode = heml::SyntheticMode::Prototype;
  } else if (args.mode == "xor") {
    spec.mode = heml::SyntheticMode::Xor;
  } else {
    throw heml::UsageError("gen: unknown mode '" + args.mode + "'");
  }

  const auto data = heml::generate_synthetic(spec);
  const fs::path out_dir = args.out;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  for (const auto& [split, datasets] : data.splits) {
    fs::create_directories(out_dir / split, ec);
    for (const auto& [name, dataset] : datasets) {
      heml::save_hseg(out_dir / data.manifest.splits.at(split).at(name),
                      dataset);
    }
  }
  heml::save_manifest(data.manifest, out_dir / "manifest.json");

  const heml::Index n = 2 * spec.n_per_class;
  log.event("generated",
            {{"mode", args.mode},
             {"segments", spec.n_segments},
             {"input_dim", spec.input_dim},
             {"samples_per_split", n},
             {"seed", spec.seed}},
            "");
  std::cout << "generated " << heml::synthetic_mode_name(spec.mode)
            << " dataset: segments=" << spec.n_segments
            << " input_dim=" << spec.input_dim << " samples_per_split=" << n
            << " noise_sigma=" << spec.noise_sigma << " seed=" << spec.seed
            << "\n"
            << "manifest: " << (out_dir / "manifest.json").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string out;
  heml::TrainConfig config;
  int jobs = 1;
};

ordered_json precision_entries(const heml::EvalReport& report) {
  ordered_json p;
  for (const auto& [k, v] : report.precision) p[std::to_string(k)] = v;
  return p;
}

int run_train(const TrainArgs& args, const Logger& log) {
  const auto manifest = heml::load_manifest(args.manifest);
  const auto schedule = heml::build_schedule(manifest);
  const auto leaf_data = heml::load_leaf_data(manifest);

  heml::WarningLog warnings;
  const auto store = heml::train_bottom_up(manifest, leaf_data, args.config,
                                           args.jobs, &warnings);
  log.warnings(warnings);

  const fs::path out_dir = args.out;
  heml::save_store(out_dir / "store", store);

  // Per-node summary; P@K on the validation split when present.
  const bool has_val = !leaf_data.val.empty();
  ordered_json summary;
  summary["manifest_hash"] = store.manifest_hash;
  summary["seed"] = args.config.seed;
  summary["loss"] = heml::loss_name(args.config.loss);
  summary["epochs"] = args.config.epochs;
  auto& nodes = summary["nodes"] = ordered_json::array();

  std::vector<heml::Index> ks = {1, 2, 8};
  for (const auto& node : schedule.nodes) {
    const auto& ckpt = store.by_node.at(node.id);
    ordered_json entry;
    entry["id"] = node.id;
    entry["name"] = node.name;
    entry["level"] = node.level;
    entry["final_loss"] =
        ckpt.history.empty() ? 0.0 : ckpt.history.back();
    entry["best_epoch"] = ckpt.best_epoch;
    if (has_val) {
      const auto val_ds =
          heml::node_dataset(schedule, node.id, leaf_data.val);
      std::vector<heml::Index> usable;
      for (heml::Index k : ks) {
        if (k < val_ds.size()) usable.push_back(k);
      }
      if (!usable.empty()) {
        const auto report = heml::evaluate_node(ckpt, val_ds, usable);
        entry["precision"] = precision_entries(report);
      }
    }
    nodes.push_back(entry);
    log.event("node_done", entry,
              "trained node " + std::to_string(node.id) + " ('" + node.name +
                  "')");
  }

  std::ofstream summary_out(out_dir / "run_summary.json");
  if (!summary_out) {
    throw heml::FormatError("train: cannot write run summary in " +
                            out_dir.string());
  }
  summary_out << summary.dump(2) << "\n";

  std::cout << "trained " << schedule.size() << " nodes ("
            << schedule.leaf_count << " leaves) into "
            << (out_dir / "store").string() << "\n";
  return 0;
}

struct TreeArgs {
  std::string store;
  std::string manifest;
  std::string a_dir;
  std::string b_dir;
  heml::Index a_index = 0;
  heml::Index b_index = 0;
  std::vector<std::string> formats = {"json"};
  std::string out = ".";
};

std::map<std::string, heml::SegmentSample> load_query(
    const heml::SegmentManifest& manifest, const fs::path& dir,
    heml::Index index, const std::string& which) {
  std::string missing;
  for (const auto& name : manifest.segments) {
    if (!fs::exists(dir / (name + ".hseg"))) {
      if (!missing.empty()) missing += ", ";
      missing += name;
    }
  }
  if (!missing.empty()) {
    throw heml::DataError("query " + which + ": missing segment files in " +
                          dir.string() + ": " + missing);
  }
  std::map<std::string, heml::SegmentSample> query;
  for (const auto& name : manifest.segments) {
    const auto data = heml::load_hseg(dir / (name + ".hseg"), name);
    if (data.dim() != manifest.input_dim) {
      throw heml::FormatError("query " + which + ": segment '" + name +
                              "' has dim " + std::to_string(data.dim()) +
                              ", manifest expects " +
                              std::to_string(manifest.input_dim));
    }
    if (index < 0 || index >= data.size()) {
      throw heml::UsageError("query " + which + ": sample index " +
                             std::to_string(index) + " out of range for '" +
                             name + "' (n=" + std::to_string(data.size()) +
                             ")");
    }
    query[name] = data.sample(index);
  }
  return query;
}

int run_tree(const TreeArgs& args, const Logger& log) {
  const auto manifest = heml::load_manifest(args.manifest);
  const auto schedule = heml::build_schedule(manifest);
  const auto store = heml::load_store(args.store, manifest);

  const auto query_a = load_query(manifest, args.a_dir, args.a_index, "A");
  const auto query_b = load_query(manifest, args.b_dir, args.b_index, "B");

  heml::WarningLog warnings;
  auto tree =
      heml::build_metric_tree(store, schedule, query_a, query_b, &warnings);
  tree.query_a = args.a_dir + "[" + std::to_string(args.a_index) + "]";
  tree.query_b = args.b_dir + "[" + std::to_string(args.b_index) + "]";
  log.warnings(warnings);

  const fs::path out_dir = args.out;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  for (const auto& format : args.formats) {
    const std::string payload = heml::export_tree(tree, format);
    const fs::path path = out_dir / ("tree." + format);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw heml::FormatError("tree: cannot write " + path.string());
    }
    out << payload;
    log.event("exported", {{"format", format}, {"path", path.string()}},
              "wrote " + path.string());
  }

  char root_d[32], root_z[32];
  std::snprintf(root_d, sizeof(root_d), "%.3f", tree.root().normalized);
  std::snprintf(root_z, sizeof(root_z), "%.3f", tree.z);
  std::cout << "root normalized distance = " << root_d << "\n"
            << "z = " << root_z << " (of " << tree.leaf_count << " leaves)\n";
  return 0;
}

struct EvalArgs {
  std::string store;
  std::string manifest;
  std::string split = "val";
  std::vector<heml::Index> ks = {1, 2, 8};
  std::string out;
};

int run_eval(const EvalArgs& args, const Logger& log) {
  const auto manifest = heml::load_manifest(args.manifest);
  const auto schedule = heml::build_schedule(manifest);
  const auto store = heml::load_store(args.store, manifest);

  if (!manifest.has_split(args.split)) {
    throw heml::UsageError("eval: manifest has no split '" + args.split + "'");
  }
  std::map<std::string, heml::Dataset> leaves;
  for (const auto& name : manifest.segments) {
    leaves[name] = heml::load_dataset(manifest, name, args.split);
  }

  // Schedule level order: leaves first, the full combination last.
  std::vector<heml::EvalReport> reports;
  for (int level = 0; level <= schedule.max_level(); ++level) {
    for (int id : schedule.ids_at_level(level)) {
      const auto dataset = heml::node_dataset(schedule, id, leaves);
      reports.push_back(
          heml::evaluate_node(store.by_node.at(id), dataset, args.ks));
      log.event("node_evaluated",
                {{"id", id}, {"name", schedule.node(id).name}}, "");
    }
  }

  const std::string table = heml::report_table(reports);
  std::cout << table;
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw heml::FormatError("eval: cannot write " + args.out);
    out << heml::report_to_json(reports);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical explainable metric learning over segment "
               "features"};
  app.require_subcommand(1);

  Logger log;
  app.add_flag("-v,--verbose", log.verbose,
               "line-oriented JSON logs on stderr");

  std::function<int()> action;

  auto* gen = app.add_subcommand("gen", "generate a synthetic segment dataset");
  auto gen_args = std::make_shared<GenArgs>();
  gen->add_option("--out", gen_args->out, "output directory")->required();
  gen->add_option("--mode", gen_args->mode, "prototype|xor");
  gen->add_option("--n-per-class", gen_args->spec.n_per_class,
                  "samples per class per split");
  gen->add_option("--n-segments", gen_args->spec.n_segments,
                  "number of leaf segments");
  gen->add_option("--dim", gen_args->spec.input_dim, "canvas length");
  gen->add_option("--noise", gen_args->spec.noise_sigma,
                  "gaussian noise sigma");
  gen->add_option("--seed", gen_args->spec.seed, "prng seed");
  gen->callback([&action, gen_args, &log] {
    action = [gen_args, &log] { return run_gen(*gen_args, log); };
  });

  auto* train = app.add_subcommand("train", "train all segment combinations "
                                            "bottom-up");
  auto train_args = std::make_shared<TrainArgs>();
  train->add_option("--manifest", train_args->manifest, "manifest path")
      ->required();
  train->add_option("--out", train_args->out, "output directory")->required();
  train->add_option("--seed", train_args->config.seed, "prng seed");
  train->add_option("--epochs", train_args->config.epochs, "epochs per node");
  train->add_option("--lr", train_args->config.learning_rate, "sgd step size");
  train->add_option("--batch", train_args->config.batch_size, "batch size");
  train->add_option("--margin", train_args->config.margin, "loss margin");
  train
      ->add_option_function<std::string>(
          "--margin-mode",
          [train_args](const std::string& v) {
            train_args->config.margin_mode = heml::margin_mode_from_name(v);
          },
          "abs|hinge")
      ->check(CLI::IsMember({"abs", "hinge"}));
  train
      ->add_option_function<std::string>(
          "--loss",
          [train_args](const std::string& v) {
            train_args->config.loss = heml::loss_from_name(v);
          },
          "triplet|snr|ntxent")
      ->check(CLI::IsMember({"triplet", "snr", "ntxent"}));
  train
      ->add_option_function<std::string>(
          "--miner",
          [train_args](const std::string& v) {
            train_args->config.miner = heml::miner_from_name(v);
          },
          "all|semihard")
      ->check(CLI::IsMember({"all", "semihard"}));
  train->add_option("--embed-dim", train_args->config.embed_dim,
                    "embedding dimension");
  train->add_option("--temperature", train_args->config.temperature,
                    "ntxent temperature");
  train->add_option("--alpha", train_args->config.alpha, "semantic weight");
  train->add_option("--lambda", train_args->config.lambda,
                    "dissimilar-pair weight");
  train->add_option("--jobs", train_args->jobs,
                    "parallel node trainings per level");
  train->callback([&action, train_args, &log] {
    action = [train_args, &log] { return run_train(*train_args, log); };
  });

  auto* tree = app.add_subcommand("tree", "explain a query pair as a metric "
                                          "tree");
  auto tree_args = std::make_shared<TreeArgs>();
  tree->add_option("--store", tree_args->store, "checkpoint store directory")
      ->required();
  tree->add_option("--manifest", tree_args->manifest, "manifest path")
      ->required();
  tree->add_option("--a", tree_args->a_dir,
                   "directory with query A <segment>.hseg files")
      ->required();
  tree->add_option("--b", tree_args->b_dir,
                   "directory with query B <segment>.hseg files")
      ->required();
  tree->add_option("--a-index", tree_args->a_index, "sample index in A files");
  tree->add_option("--b-index", tree_args->b_index, "sample index in B files");
  tree->add_option("--format", tree_args->formats, "json and/or dot")
      ->check(CLI::IsMember({"json", "dot"}));
  tree->add_option("--out", tree_args->out, "output directory");
  tree->callback([&action, tree_args, &log] {
    action = [tree_args, &log] { return run_tree(*tree_args, log); };
  });

  auto* eval = app.add_subcommand("eval", "precision@k per segment "
                                          "combination");
  auto eval_args = std::make_shared<EvalArgs>();
  eval->add_option("--store", eval_args->store, "checkpoint store directory")
      ->required();
  eval->add_option("--manifest", eval_args->manifest, "manifest path")
      ->required();
  eval->add_option("--split", eval_args->split, "dataset split to score");
  eval->add_option("--k", eval_args->ks, "k values");
  eval->add_option("--out", eval_args->out, "also write a JSON report here");
  eval->callback([&action, eval_args, &log] {
    action = [eval_args, &log] { return run_eval(*eval_args, log); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const heml::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const heml::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
