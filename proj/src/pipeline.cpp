#include "lesionkit/pipeline.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/parallel.hpp"
#include "lesionkit/report.hpp"

#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace lesionkit {

void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

ImageCache load_images(const Manifest& m, unsigned threads) {
  std::vector<Image8> decoded(m.records.size());
  const fs::path root = m.corpus_root;
  parallel_for(m.records.size(), threads,
               [&](std::size_t i) { decoded[i] = read_image(root / m.records[i].path); });
  ImageCache cache;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    cache.emplace(m.records[i].id, std::move(decoded[i]));
  return cache;
}

namespace {

AugmentPolicy sized_policy(AugmentPolicy policy, const ModelSpec& model) {
  policy.target_width = model.input_width;
  policy.target_height = model.input_height;
  return policy;
}

}  // namespace

FeatureTable extract_downsample_features(const Manifest& m, const ImageCache& images,
                                         const ModelSpec& model, const AugmentPolicy& policy,
                                         unsigned threads) {
  const AugmentPolicy sized = sized_policy(policy, model);
  FeatureTable t;
  t.classes = m.classes;
  t.features.resize(static_cast<Eigen::Index>(m.records.size()), model.feature_dim);
  for (const auto& r : m.records) {
    t.ids.push_back(r.id);
    t.labels.push_back(m.class_index(r.label));
  }
  parallel_for(m.records.size(), threads, [&](std::size_t i) {
    const auto& img = images.at(m.records[i].id);
    const auto x = apply_pipeline<double>(img, sized, SampleSeed{0, m.records[i].id, 0}, false);
    t.features.row(static_cast<Eigen::Index>(i)) = flatten_rgb(x).transpose();
  });
  return t;
}

HeadTrainer::EpochFeatures augmenting_features(const ImageCache& images, const ModelSpec& model,
                                               const AugmentPolicy& policy,
                                               std::uint64_t augment_seed, unsigned threads) {
  const AugmentPolicy sized = sized_policy(policy, model);
  return [&images, sized, augment_seed, threads](int epoch, const std::vector<std::string>& ids,
                                                 Matrix<double>& x) {
    parallel_for(ids.size(), threads, [&](std::size_t i) {
      const auto out = apply_pipeline<double>(images.at(ids[i]), sized,
                                              SampleSeed{augment_seed, ids[i], epoch}, true);
      x.row(static_cast<Eigen::Index>(i)) = flatten_rgb(out).transpose();
    });
  };
}

HeadTrainingSettings training_settings(const RunConfig& c) {
  HeadTrainingSettings s;
  s.loop = c.train;
  s.scheduler = c.scheduler;
  s.stopper = c.stopper;
  s.beta1 = c.beta1;
  s.beta2 = c.beta2;
  s.seed = seeds::train(c.seed);
  return s;
}

CrossValidation cross_validate(const FeatureTable& table, const SplitPlan& split,
                               const FoldPlan& folds, const HeadTrainingSettings& settings,
                               const fs::path& out_dir,
                               const HeadTrainer::EpochFeatures& epoch_features) {
  CrossValidation cv;
  fs::create_directories(out_dir);
  std::vector<std::pair<MetricReport, std::size_t>> reports;
  for (int k = 0; k < folds.k; ++k) {
    const fs::path fold_dir = out_dir / ("fold" + std::to_string(k));
    fs::create_directories(fold_dir);
    HeadTrainingSettings s = settings;
    s.checkpoint.directory = fold_dir;

    FoldOutcome outcome;
    outcome.fold = k;
    outcome.fit = train_head(table, folds, k, s, epoch_features);
    const FeatureTable val = table.select([&](const std::string& id) {
      const auto it = folds.fold_of.find(id);
      return it != folds.fold_of.end() && it->second == k;
    });
    outcome.validation_log = predict(outcome.fit.head, val);
    outcome.validation_size = val.rows();
    outcome.report = compute_metrics(confusion_from_log(outcome.validation_log, table.classes));

    save_history(fold_dir / "history.jsonl", outcome.fit.history);
    save_prediction_log(fold_dir / "predictions.csv", outcome.validation_log);
    save_report(fold_dir / "metrics.json", outcome.report);
    for (const char* name : {"history.jsonl", "best.ckpt", "predictions.csv", "metrics.json"})
      cv.artifacts.push_back(fold_dir / name);

    reports.emplace_back(outcome.report, outcome.validation_size);
    cv.folds.push_back(std::move(outcome));
  }

  cv.aggregate = aggregate_folds(reports);
  save_report(out_dir / "metrics.json", cv.aggregate);
  std::ostringstream table_text, csv;
  print_class_table(table_text, cv.aggregate);
  write_class_csv(csv, cv.aggregate);
  write_text_file(out_dir / "metrics.txt", table_text.str());
  write_text_file(out_dir / "metrics.csv", csv.str());
  cv.artifacts.insert(cv.artifacts.end(),
                      {out_dir / "metrics.json", out_dir / "metrics.txt", out_dir / "metrics.csv"});

  for (const auto& f : cv.folds) {
    if (f.fit.history.best_val_acc > cv.folds[static_cast<std::size_t>(cv.best_fold)].fit.history.best_val_acc)
      cv.best_fold = f.fold;
  }
  cv.test_log = predict(cv.folds[static_cast<std::size_t>(cv.best_fold)].fit.head, table, split, Subset::test);
  save_prediction_log(out_dir / "predictions_test.csv", cv.test_log);
  cv.artifacts.push_back(out_dir / "predictions_test.csv");
  if (!cv.test_log.rows.empty()) {
    cv.test_report = compute_metrics(confusion_from_log(cv.test_log, table.classes));
    save_report(out_dir / "test_metrics.json", *cv.test_report);
    cv.artifacts.push_back(out_dir / "test_metrics.json");
  }
  return cv;
}

PipelineResult run_pipeline(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  config.validate();
  fs::create_directories(out_dir);
  PipelineResult result;
  auto artifact = [&](const fs::path& p) {
    result.artifacts.push_back(p);
    log << "artifact: " << p.generic_string() << '\n';
  };

  write_json_file(out_dir / "run_config.json", to_json(config));
  artifact(out_dir / "run_config.json");

  const auto class_map = config.class_map.empty() ? default_class_map(config.corpus_root) : config.class_map;
  ScanResult scan = scan_dataset(config.corpus_root, class_map, config.threads);
  for (const auto& issue : scan.issues) log << "scan: " << issue.path << ": " << issue.reason << '\n';
  save_manifest(out_dir / "manifest.jsonl", scan.manifest);
  artifact(out_dir / "manifest.jsonl");
  log << "ingest: " << scan.manifest.records.size() << " records\n";

  hash_manifest(scan.manifest, config.threads);
  DedupResult dedup = deduplicate(scan.manifest, config.dedup_threshold);
  save_manifest(out_dir / "manifest.dedup.jsonl", dedup.kept);
  {
    std::ofstream out(out_dir / "removed.tsv", std::ios::binary);
    write_removed_report(out, dedup.removed);
  }
  artifact(out_dir / "manifest.dedup.jsonl");
  artifact(out_dir / "removed.tsv");
  log << "dedup: kept " << dedup.kept.records.size() << ", removed " << dedup.removed.size() << '\n';
  for (const auto& v : validate_manifest(dedup.kept))
    log << "manifest: " << v.kind << ": " << v.detail << '\n';

  result.split = stratified_holdout(dedup.kept, config.test_fraction, seeds::split(config.seed));
  const Manifest trainval = restrict_to(dedup.kept, result.split, Subset::trainval);
  result.folds = stratified_kfold(trainval, config.k, seeds::folds(config.seed));
  if (const auto violations = verify_partition(dedup.kept, result.split, result.folds); !violations.empty())
    throw DataError("partition check failed: " + violations.front().kind + ": " + violations.front().detail);
  save_split(out_dir / "split.jsonl", result.split);
  save_folds(out_dir / "folds.jsonl", result.folds);
  {
    std::ostringstream table;
    print_partition_table(table, dedup.kept, result.split, result.folds);
    write_text_file(out_dir / "partition.txt", table.str());
    log << table.str();
  }
  artifact(out_dir / "split.jsonl");
  artifact(out_dir / "folds.jsonl");
  artifact(out_dir / "partition.txt");

  const ModelSpec& model = config.model_spec();
  FeatureTable features;
  ImageCache images;
  HeadTrainer::EpochFeatures hook;
  if (model.extractor == "downsample") {
    images = load_images(dedup.kept, config.threads);
    features = extract_downsample_features(dedup.kept, images, model, config.augment, config.threads);
    hook = augmenting_features(images, model, config.augment, seeds::augment(config.seed), config.threads);
  } else {
    const FeatureTable loaded = load_feature_table(config.features);
    if (loaded.dim() != model.feature_dim)
      throw DataError("feature table dim " + std::to_string(loaded.dim()) + " does not match " +
                      model.name + " (" + std::to_string(model.feature_dim) + ")");
    if (loaded.classes != dedup.kept.classes) throw DataError("feature table classes differ from manifest");
    std::set<std::string> ids;
    for (const auto& r : dedup.kept.records) ids.insert(r.id);
    features = loaded.select([&](const std::string& id) { return ids.count(id) > 0; });
    if (features.rows() != ids.size())
      throw DataError("feature table is missing " + std::to_string(ids.size() - features.rows()) + " manifest ids");
  }
  save_feature_table(out_dir / "features.csv", features);
  artifact(out_dir / "features.csv");

  result.cv = cross_validate(features, result.split, result.folds, training_settings(config), out_dir, hook);
  for (const auto& p : result.cv.artifacts) artifact(p);
  for (const auto& f : result.cv.folds) {
    log << "fold " << f.fold << ": epochs " << f.fit.history.epochs.size() << ", best epoch "
        << f.fit.history.best_epoch << ", val acc " << f.fit.history.best_val_acc << ", weighted f1 "
        << f.report.f1.weighted << '\n';
  }

  const RenderedReport rendered = render_report({{model.name, model.parameters, result.cv.aggregate}});
  write_text_file(out_dir / "report.txt", rendered.table);
  write_text_file(out_dir / "report.csv", rendered.csv);
  write_text_file(out_dir / "heatmap.svg", rendered.heatmaps.front().second);
  artifact(out_dir / "report.txt");
  artifact(out_dir / "report.csv");
  artifact(out_dir / "heatmap.svg");
  log << rendered.table;

  result.manifest = std::move(dedup.kept);
  result.removed = std::move(dedup.removed);
  return result;
}

}  // namespace lesionkit
