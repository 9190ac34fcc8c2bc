#include "lesionkit/config.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/rng.hpp"

#include <fstream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace lesionkit {

std::map<std::string, ModelSpec> default_model_registry() {
  std::map<std::string, ModelSpec> r;
  auto add = [&](ModelSpec s) { r.emplace(s.name, std::move(s)); };
  add({"downsample-8", 8, 8, 8 * 8 * 3, 0, "downsample", "bilinear 8x8 RGB"});
  add({"inception_v3", 299, 299, 2048, 27'200'000, "external", "torchvision IMAGENET1K_V1"});
  add({"efficientnet_v2_l", 480, 480, 1280, 118'500'000, "external", "torchvision IMAGENET1K_V1"});
  add({"convnext_large", 224, 224, 1536, 197'800'000, "external", "torchvision IMAGENET1K_V1"});
  add({"vit_l_16", 224, 224, 1024, 304'300'000, "external", "torchvision IMAGENET1K_V1"});
  add({"maxvit_t", 224, 224, 512, 30'900'000, "external", "torchvision IMAGENET1K_V1"});
  add({"davit_base", 224, 224, 1024, 88'000'000, "external", "timm davit_base.msft_in1k"});
  return r;
}

namespace seeds {
std::uint64_t split(std::uint64_t master) { return derive_seed(master, "split"); }
std::uint64_t folds(std::uint64_t master) { return derive_seed(master, "folds"); }
std::uint64_t augment(std::uint64_t master) { return derive_seed(master, "augment"); }
std::uint64_t train(std::uint64_t master) { return derive_seed(master, "train"); }
}  // namespace seeds

const ModelSpec& RunConfig::model_spec() const {
  const auto it = registry.find(model);
  if (it == registry.end()) throw ConfigError("model '" + model + "' is not in the registry");
  return it->second;
}

void RunConfig::validate() const {
  if (corpus_root.empty()) throw ConfigError("corpus_root is required");
  if (!fs::is_directory(corpus_root))
    throw ConfigError("corpus_root is not a directory: " + corpus_root.string());
  for (const auto& cd : class_map) {
    if (cd.dir.empty() || cd.label.empty()) throw ConfigError("class_map entries need dir and label");
    if (!fs::is_directory(corpus_root / cd.dir))
      throw ConfigError("class_map dir not found: " + (corpus_root / cd.dir).string());
  }
  validate_stages();
  const ModelSpec& spec = model_spec();
  if (spec.extractor == "external") {
    if (features.empty())
      throw ConfigError("model '" + model + "' is external: set features to a FeatureTable file");
    if (!fs::is_regular_file(features)) throw ConfigError("features file not found: " + features.string());
  }
}

void RunConfig::validate_stages() const {
  if (dedup_threshold < 0 || dedup_threshold > 64)
    throw ConfigError("dedup.threshold must lie in [0, 64]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("split.test_fraction must lie in (0, 1)");
  if (k < 2) throw ConfigError("split.k must be >= 2");
  augment.validate();
  train.validate();
  if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0))
    throw ConfigError("scheduler.factor must lie in (0, 1)");
  if (scheduler.patience < 1) throw ConfigError("scheduler.patience must be >= 1");
  if (scheduler.min_lr < 0.0) throw ConfigError("scheduler.min_lr must be >= 0");
  if (stopper.patience < 1) throw ConfigError("stopper.patience must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adamax betas must lie in [0, 1)");
  const ModelSpec& spec = model_spec();
  if (spec.input_width <= 0 || spec.input_height <= 0 || spec.feature_dim <= 0)
    throw ConfigError("model '" + model + "' needs positive input size and feature_dim");
  if (spec.extractor == "downsample") {
    if (spec.feature_dim != spec.input_width * spec.input_height * 3)
      throw ConfigError("downsample model feature_dim must equal width * height * 3");
  } else if (spec.extractor != "external") {
    throw ConfigError("unknown extractor '" + spec.extractor + "'");
  }
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

template <typename T>
void get_if(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    check_keys(j, {"corpus_root", "class_map", "dedup", "split", "seed", "augment", "train",
                   "scheduler", "stopper", "adamax", "model", "models", "features", "threads"},
               "config");
    if (j.contains("corpus_root")) c.corpus_root = resolve(j["corpus_root"].get<std::string>(), base_dir);
    if (j.contains("class_map")) {
      for (const auto& e : j["class_map"]) {
        check_keys(e, {"dir", "label", "source"}, "class_map entry");
        c.class_map.push_back({e.at("dir").get<std::string>(), e.at("label").get<std::string>(),
                               e.value("source", std::string{})});
      }
    }
    if (j.contains("dedup")) {
      check_keys(j["dedup"], {"threshold"}, "dedup");
      get_if(j["dedup"], "threshold", c.dedup_threshold);
    }
    if (j.contains("split")) {
      check_keys(j["split"], {"test_fraction", "k"}, "split");
      get_if(j["split"], "test_fraction", c.test_fraction);
      get_if(j["split"], "k", c.k);
    }
    get_if(j, "seed", c.seed);
    if (j.contains("augment")) {
      const auto& a = j["augment"];
      check_keys(a, {"rotation_max_deg", "hflip_prob", "vflip_prob", "normalize"}, "augment");
      get_if(a, "rotation_max_deg", c.augment.rotation_max_deg);
      get_if(a, "hflip_prob", c.augment.hflip_prob);
      get_if(a, "vflip_prob", c.augment.vflip_prob);
      get_if(a, "normalize", c.augment.normalize);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      check_keys(t, {"max_epochs", "batch_size", "initial_lr"}, "train");
      get_if(t, "max_epochs", c.train.max_epochs);
      get_if(t, "batch_size", c.train.batch_size);
      get_if(t, "initial_lr", c.train.initial_lr);
    }
    if (j.contains("scheduler")) {
      const auto& s = j["scheduler"];
      check_keys(s, {"factor", "patience", "min_lr"}, "scheduler");
      get_if(s, "factor", c.scheduler.factor);
      get_if(s, "patience", c.scheduler.patience);
      get_if(s, "min_lr", c.scheduler.min_lr);
    }
    if (j.contains("stopper")) {
      check_keys(j["stopper"], {"patience"}, "stopper");
      get_if(j["stopper"], "patience", c.stopper.patience);
    }
    if (j.contains("adamax")) {
      check_keys(j["adamax"], {"beta1", "beta2"}, "adamax");
      get_if(j["adamax"], "beta1", c.beta1);
      get_if(j["adamax"], "beta2", c.beta2);
    }
    get_if(j, "model", c.model);
    if (j.contains("models")) {
      if (!j["models"].is_object()) throw ConfigError("models must be an object");
      for (const auto& [name, m] : j["models"].items()) {
        check_keys(m, {"input_size", "feature_dim", "parameters", "extractor", "variant"},
                   "models." + name);
        ModelSpec spec;
        if (auto it = c.registry.find(name); it != c.registry.end()) spec = it->second;
        spec.name = name;
        if (m.contains("input_size")) {
          const auto size = m["input_size"].get<std::vector<int>>();
          if (size.size() != 2) throw ConfigError("models." + name + ".input_size needs [w, h]");
          spec.input_width = size[0];
          spec.input_height = size[1];
        }
        get_if(m, "feature_dim", spec.feature_dim);
        get_if(m, "parameters", spec.parameters);
        get_if(m, "extractor", spec.extractor);
        get_if(m, "variant", spec.variant);
        c.registry[name] = spec;
      }
    }
    if (j.contains("features")) c.features = resolve(j["features"].get<std::string>(), base_dir);
    get_if(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j, fs::absolute(path).parent_path());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["corpus_root"] = c.corpus_root.generic_string();
  auto& map = j["class_map"] = nlohmann::ordered_json::array();
  for (const auto& cd : c.class_map) {
    nlohmann::ordered_json e;
    e["dir"] = cd.dir;
    e["label"] = cd.label;
    if (!cd.source.empty()) e["source"] = cd.source;
    map.push_back(e);
  }
  j["dedup"]["threshold"] = c.dedup_threshold;
  j["split"]["test_fraction"] = c.test_fraction;
  j["split"]["k"] = c.k;
  j["seed"] = c.seed;
  j["augment"]["rotation_max_deg"] = c.augment.rotation_max_deg;
  j["augment"]["hflip_prob"] = c.augment.hflip_prob;
  j["augment"]["vflip_prob"] = c.augment.vflip_prob;
  j["augment"]["normalize"] = c.augment.normalize;
  j["train"]["max_epochs"] = c.train.max_epochs;
  j["train"]["batch_size"] = c.train.batch_size;
  j["train"]["initial_lr"] = c.train.initial_lr;
  j["scheduler"]["factor"] = c.scheduler.factor;
  j["scheduler"]["patience"] = c.scheduler.patience;
  j["scheduler"]["min_lr"] = c.scheduler.min_lr;
  j["stopper"]["patience"] = c.stopper.patience;
  j["adamax"]["beta1"] = c.beta1;
  j["adamax"]["beta2"] = c.beta2;
  j["model"] = c.model;
  auto& models = j["models"] = nlohmann::ordered_json::object();
  for (const auto& [name, m] : c.registry) {
    nlohmann::ordered_json e;
    e["input_size"] = {m.input_width, m.input_height};
    e["feature_dim"] = m.feature_dim;
    e["parameters"] = m.parameters;
    e["extractor"] = m.extractor;
    e["variant"] = m.variant;
    models[name] = e;
  }
  if (!c.features.empty()) j["features"] = c.features.generic_string();
  j["threads"] = c.threads;
  return j;
}

}  // namespace lesionkit
