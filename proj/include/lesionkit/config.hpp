#pragma once

#include "lesionkit/augment.hpp"
#include "lesionkit/catalog.hpp"
#include "lesionkit/trainctl.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lesionkit {

/// Registry entry for a feature extractor.
struct ModelSpec {
  std::string name;
  int input_width = 224;
  int input_height = 224;
  int feature_dim = 0;
  std::int64_t parameters = 0;   // backbone size, reporting only
  std::string extractor = "external";  // "downsample" runs in-process
  std::string variant;           // pinned weight variant, reporting only
};

std::map<std::string, ModelSpec> default_model_registry();

struct RunConfig {
  std::filesystem::path corpus_root;
  std::vector<ClassDir> class_map;  // empty: one class per subdirectory
  int dedup_threshold = 0;
  double test_fraction = 0.2;
  int k = 5;
  std::uint64_t seed = 42;
  AugmentPolicy augment;
  TrainLoopConfig train;
  PlateauScheduler scheduler;
  EarlyStopper stopper;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::string model = "downsample-8";
  std::map<std::string, ModelSpec> registry = default_model_registry();
  std::filesystem::path features;  // FeatureTable for external extractors
  unsigned threads = 0;

  /// Throws ConfigError for the first bad field or missing referenced file.
  void validate() const;
  /// Everything except corpus and feature-file checks.
  void validate_stages() const;
  const ModelSpec& model_spec() const;
};

/// Unknown keys are rejected. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& c);

/// Seeds for each stage, derived from the master seed.
namespace seeds {
std::uint64_t split(std::uint64_t master);
std::uint64_t folds(std::uint64_t master);
std::uint64_t augment(std::uint64_t master);
std::uint64_t train(std::uint64_t master);
}  // namespace seeds

}  // namespace lesionkit
