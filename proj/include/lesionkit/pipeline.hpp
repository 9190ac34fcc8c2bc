#pragma once

#include "lesionkit/augment.hpp"
#include "lesionkit/catalog.hpp"
#include "lesionkit/config.hpp"
#include "lesionkit/dedup.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/partition.hpp"
#include "lesionkit/refmodel.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lesionkit {

/// Decoded images of a manifest, keyed by record id.
using ImageCache = std::map<std::string, Image8>;

ImageCache load_images(const Manifest& m, unsigned threads = 0);

/// Resized, normalised RGB flattened channel by channel, then row by row.
/// Gray images are replicated into three channels.
template <typename Scalar>
Vector<Scalar> flatten_rgb(const Raster<Scalar>& x) {
  const Eigen::Index plane = x.width() * x.height();
  Vector<Scalar> out(3 * plane);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const auto& p = x.planes[x.channels() == 1 ? 0 : static_cast<std::size_t>(c)];
    out.segment(c * plane, plane) = Eigen::Map<const Vector<Scalar>>(p.data(), plane);
  }
  return out;
}

/// The built-in "downsample" extractor in evaluation mode (no augmentation).
FeatureTable extract_downsample_features(const Manifest& m, const ImageCache& images,
                                         const ModelSpec& model, const AugmentPolicy& policy,
                                         unsigned threads = 0);

/// Per-epoch hook that re-extracts training rows from freshly augmented
/// images, seeded by (augment_seed, id, epoch).
HeadTrainer::EpochFeatures augmenting_features(const ImageCache& images, const ModelSpec& model,
                                               const AugmentPolicy& policy,
                                               std::uint64_t augment_seed, unsigned threads = 0);

struct FoldOutcome {
  int fold = 0;
  HeadFit fit;
  PredictionLog validation_log;
  MetricReport report;
  std::size_t validation_size = 0;
};

struct CrossValidation {
  std::vector<FoldOutcome> folds;
  MetricReport aggregate;
  int best_fold = 0;  // highest restored validation accuracy, lowest index on ties
  PredictionLog test_log;
  std::optional<MetricReport> test_report;
  std::vector<std::filesystem::path> artifacts;
};

/// Train and score one head per fold, aggregate the fold reports, and score
/// the test split with the best fold's head. Writes everything under out_dir.
CrossValidation cross_validate(const FeatureTable& table, const SplitPlan& split,
                               const FoldPlan& folds, const HeadTrainingSettings& settings,
                               const std::filesystem::path& out_dir,
                               const HeadTrainer::EpochFeatures& epoch_features = {});

HeadTrainingSettings training_settings(const RunConfig& c);

struct PipelineResult {
  Manifest manifest;  // after dedup
  std::vector<RemovedPair> removed;
  SplitPlan split;
  FoldPlan folds;
  CrossValidation cv;
  std::vector<std::filesystem::path> artifacts;
};

/// ingest -> dedup -> split -> features -> per-fold training -> metrics ->
/// report, every artifact under out_dir. Progress goes to `log`.
PipelineResult run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir,
                            std::ostream& log);

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lesionkit
