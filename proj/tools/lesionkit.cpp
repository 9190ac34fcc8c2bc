// Command-line entry point: one subcommand per pipeline stage plus `pipeline`.

#include "lesionkit/augment.hpp"
#include "lesionkit/catalog.hpp"
#include "lesionkit/config.hpp"
#include "lesionkit/dedup.hpp"
#include "lesionkit/errors.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/partition.hpp"
#include "lesionkit/pipeline.hpp"
#include "lesionkit/refmodel.hpp"
#include "lesionkit/report.hpp"
#include "lesionkit/synthetic.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace lesionkit;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<int> threshold;
  std::string model;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)");
  cmd->add_option("--seed", f.seed, "Master seed override");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--threshold", f.threshold, "Dedup Hamming threshold override");
  cmd->add_option("--model", f.model, "Model registry entry override");
}

RunConfig effective_config(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.threshold) c.dedup_threshold = *f.threshold;
  if (!f.model.empty()) c.model = f.model;
  return c;
}

void announce(const fs::path& p) { std::cout << "artifact: " << p.generic_string() << '\n'; }

void freeze_config(const RunConfig& c, const fs::path& out) {
  fs::create_directories(out);
  write_json_file(out / "run_config.json", to_json(c));
  announce(out / "run_config.json");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

[[noreturn]] void fail(int code, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["exit"] = code;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  std::exit(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skin-lesion dataset curation and evaluation toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string root, manifest_path, features_path, split_path, folds_path, predictions_path, classes;
  std::optional<double> test_fraction;
  std::optional<int> k;
  int epoch = 0, limit = 16, per_class = 200, duplicates = 0, image_size = 32;
  std::vector<std::string> metric_inputs;

  auto* ingest = app.add_subcommand("ingest", "Scan a directory-per-class corpus into a manifest");
  add_common(ingest, flags);
  ingest->add_option("--root", root, "Corpus root (overrides config corpus_root)");

  auto* dedup = app.add_subcommand("dedup", "Hash images and drop perceptual duplicates");
  add_common(dedup, flags);
  dedup->add_option("--manifest", manifest_path, "Input manifest (default OUT/manifest.jsonl)");

  auto* split = app.add_subcommand("split", "Stratified holdout and k-fold plans");
  add_common(split, flags);
  split->add_option("--manifest", manifest_path, "Input manifest (default OUT/manifest.dedup.jsonl)");
  split->add_option("--test-fraction", test_fraction, "Holdout fraction override");
  split->add_option("--k", k, "Fold count override");

  auto* preview = app.add_subcommand("augment-preview", "Write augmented training images as PNG");
  add_common(preview, flags);
  preview->add_option("--manifest", manifest_path, "Input manifest (default OUT/manifest.dedup.jsonl)");
  preview->add_option("--epoch", epoch, "Epoch whose augmentation to render");
  preview->add_option("--limit", limit, "Number of records to render")->capture_default_str();

  auto* train = app.add_subcommand("train-head", "Cross-validate a softmax head on a FeatureTable");
  add_common(train, flags);
  train->add_option("--features", features_path, "FeatureTable file")->required();
  train->add_option("--split", split_path, "Split plan (default OUT/split.jsonl)");
  train->add_option("--folds", folds_path, "Fold plan (default OUT/folds.jsonl)");

  auto* evaluate = app.add_subcommand("evaluate", "Metrics for a prediction log");
  add_common(evaluate, flags);
  evaluate->add_option("--predictions", predictions_path, "PredictionLog file")->required();
  evaluate->add_option("--classes", classes, "Comma-separated class order");
  evaluate->add_option("--manifest", manifest_path, "Take the class order from a manifest");
  evaluate->add_option("--features", features_path, "Take the class order from a FeatureTable");

  auto* report = app.add_subcommand("report", "Comparison table and confusion heatmaps");
  add_common(report, flags);
  report->add_option("--metrics", metric_inputs, "MODEL=PATH to a metric report JSON")->required();

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(pipeline, flags);

  auto* synth = app.add_subcommand("synth", "Generate the bundled synthetic corpus");
  add_common(synth, flags);
  synth->add_option("--per-class", per_class, "Images per class")->capture_default_str();
  synth->add_option("--duplicates", duplicates, "Byte-duplicate copies to inject")->capture_default_str();
  synth->add_option("--size", image_size, "Image side in pixels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    fail(2, "usage", e.what());
  }

  try {
    const fs::path out = flags.out;
    RunConfig config = effective_config(flags);
    config.validate_stages();

    if (ingest->parsed()) {
      if (!root.empty()) config.corpus_root = root;
      if (config.corpus_root.empty()) throw ConfigError("ingest needs --root or corpus_root in --config");
      freeze_config(config, out);
      const auto class_map = config.class_map.empty() ? default_class_map(config.corpus_root) : config.class_map;
      const ScanResult scan = scan_dataset(config.corpus_root, class_map, config.threads);
      save_manifest(out / "manifest.jsonl", scan.manifest);
      std::ofstream issues(out / "scan_issues.txt");
      for (const auto& i : scan.issues) {
        issues << i.path << '\t' << i.reason << '\n';
        std::cerr << "scan: " << i.path << ": " << i.reason << '\n';
      }
      std::cout << "records: " << scan.manifest.records.size() << '\n';
      announce(out / "manifest.jsonl");
      announce(out / "scan_issues.txt");
    } else if (dedup->parsed()) {
      freeze_config(config, out);
      Manifest m = load_manifest(manifest_path.empty() ? out / "manifest.jsonl" : fs::path(manifest_path));
      hash_manifest(m, config.threads);
      const DedupResult result = deduplicate(m, config.dedup_threshold);
      save_manifest(out / "manifest.dedup.jsonl", result.kept);
      std::ofstream removed(out / "removed.tsv");
      write_removed_report(removed, result.removed);
      std::cout << "kept: " << result.kept.records.size() << ", removed: " << result.removed.size() << '\n';
      announce(out / "manifest.dedup.jsonl");
      announce(out / "removed.tsv");
    } else if (split->parsed()) {
      if (test_fraction) config.test_fraction = *test_fraction;
      if (k) config.k = *k;
      config.validate_stages();
      freeze_config(config, out);
      const Manifest m = load_manifest(manifest_path.empty() ? out / "manifest.dedup.jsonl" : fs::path(manifest_path));
      const SplitPlan plan = stratified_holdout(m, config.test_fraction, seeds::split(config.seed));
      const FoldPlan folds = stratified_kfold(restrict_to(m, plan, Subset::trainval), config.k, seeds::folds(config.seed));
      if (const auto v = verify_partition(m, plan, folds); !v.empty())
        throw DataError("partition check failed: " + v.front().kind + ": " + v.front().detail);
      save_split(out / "split.jsonl", plan);
      save_folds(out / "folds.jsonl", folds);
      print_partition_table(std::cout, m, plan, folds);
      announce(out / "split.jsonl");
      announce(out / "folds.jsonl");
    } else if (preview->parsed()) {
      freeze_config(config, out);
      const Manifest m = load_manifest(manifest_path.empty() ? out / "manifest.dedup.jsonl" : fs::path(manifest_path));
      AugmentPolicy policy = config.augment;
      policy.target_width = config.model_spec().input_width;
      policy.target_height = config.model_spec().input_height;
      std::vector<std::string> ids;
      for (const auto& r : m.records) {
        if (static_cast<int>(ids.size()) >= limit) break;
        ids.push_back(r.id);
      }
      for (const auto& p : materialize(m, ids, policy, seeds::augment(config.seed), epoch, out / "preview", config.threads))
        announce(p);
    } else if (train->parsed()) {
      freeze_config(config, out);
      const FeatureTable table = load_feature_table(features_path);
      if (const auto v = validate_feature_table(table); !v.empty())
        throw DataError("feature table: " + v.front().kind + ": " + v.front().detail);
      const SplitPlan plan = load_split(split_path.empty() ? out / "split.jsonl" : fs::path(split_path));
      const FoldPlan folds = load_folds(folds_path.empty() ? out / "folds.jsonl" : fs::path(folds_path));
      const CrossValidation cv = cross_validate(table, plan, folds, training_settings(config), out);
      for (const auto& f : cv.folds)
        std::cout << "fold " << f.fold << ": best epoch " << f.fit.history.best_epoch
                  << ", weighted f1 " << f.report.f1.weighted << '\n';
      print_class_table(std::cout, cv.aggregate);
      for (const auto& p : cv.artifacts) announce(p);
    } else if (evaluate->parsed()) {
      std::vector<std::string> class_order;
      if (!classes.empty()) {
        class_order = split_list(classes);
      } else if (!manifest_path.empty()) {
        class_order = load_manifest(manifest_path).classes;
      } else if (!features_path.empty()) {
        std::ifstream in(features_path);
        std::string header;
        if (!std::getline(in, header)) throw DataError("cannot read " + features_path);
        class_order = split_list(header);
        class_order.erase(class_order.begin());
      } else {
        throw ConfigError("evaluate needs --classes, --manifest or --features for the class order");
      }
      freeze_config(config, out);
      const PredictionLog log = load_prediction_log(predictions_path, class_order);
      const auto violations = validate_prediction_log(log);
      for (const auto& v : violations) std::cerr << "log: " << v.kind << ": " << v.detail << '\n';
      if (!violations.empty()) throw DataError(std::to_string(violations.size()) + " prediction log violations");
      const MetricReport r = compute_metrics(confusion_from_log(log, class_order));
      save_report(out / "metrics.json", r);
      std::cout << to_json(r).dump(2) << '\n';
      announce(out / "metrics.json");
    } else if (report->parsed()) {
      freeze_config(config, out);
      std::vector<ModelResult> results;
      for (const auto& item : metric_inputs) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("--metrics expects MODEL=PATH, got " + item);
        ModelResult r;
        r.model = item.substr(0, eq);
        if (const auto it = config.registry.find(r.model); it != config.registry.end())
          r.parameters = it->second.parameters;
        r.report = load_report(item.substr(eq + 1));
        results.push_back(std::move(r));
      }
      const RenderedReport rendered = render_report(results);
      write_text_file(out / "report.txt", rendered.table);
      write_text_file(out / "report.csv", rendered.csv);
      std::cout << rendered.table;
      announce(out / "report.txt");
      announce(out / "report.csv");
      for (const auto& [model, svg] : rendered.heatmaps) {
        write_text_file(out / ("heatmap_" + model + ".svg"), svg);
        announce(out / ("heatmap_" + model + ".svg"));
      }
    } else if (pipeline->parsed()) {
      if (flags.config.empty()) throw ConfigError("pipeline needs --config");
      run_pipeline(config, out, std::cout);
    } else if (synth->parsed()) {
      SyntheticCorpusSpec spec;
      spec.per_class.assign(spec.classes.size(), per_class);
      spec.duplicates = duplicates;
      spec.width = spec.height = image_size;
      spec.seed = config.seed;
      const auto corpus = generate_synthetic_corpus(out / "corpus", spec);
      RunConfig bundled = config;
      bundled.corpus_root = "corpus";
      write_json_file(out / "config.json", to_json(bundled));
      std::cout << "images: " << corpus.distinct << " distinct + " << corpus.duplicates << " duplicates\n";
      announce(out / "corpus");
      announce(out / "config.json");
    }
  } catch (const ConfigError& e) {
    fail(2, "config", e.what());
  } catch (const DataError& e) {
    fail(3, "data", e.what());
  } catch (const TrainingError& e) {
    fail(3, "data", e.what());
  } catch (const std::exception& e) {
    fail(3, "data", e.what());
  }
  return 0;
}
