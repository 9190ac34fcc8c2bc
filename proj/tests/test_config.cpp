#include "lesionkit/config.hpp"
#include "lesionkit/errors.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace lesionkit;
using nlohmann::json;
using lesionkit::testing::TempDir;

TEST_CASE("defaults follow the reference training setup") {
  const RunConfig c;
  CHECK(c.test_fraction == 0.2);
  CHECK(c.k == 5);
  CHECK(c.train.max_epochs == 50);
  CHECK(c.train.batch_size == 32);
  CHECK(c.scheduler.factor == 1e-3);
  CHECK(c.scheduler.patience == 3);
  CHECK(c.stopper.patience == 7);
  CHECK(c.augment.rotation_max_deg == 20.0);
  CHECK(c.beta1 == 0.9);
  CHECK(c.beta2 == 0.999);
  CHECK_NOTHROW(c.validate_stages());
}

TEST_CASE("registry") {
  const auto r = default_model_registry();
  CHECK(r.size() == 7);
  CHECK(r.at("downsample-8").feature_dim == 192);
  CHECK(r.at("downsample-8").extractor == "downsample");
  CHECK(r.at("inception_v3").input_width == 299);
  CHECK(r.at("davit_base").parameters == 88'000'000);
}

TEST_CASE("parse overrides and resolves paths") {
  const json j = json::parse(R"({
    "corpus_root": "data",
    "class_map": [{"dir": "pso", "label": "psoriasis", "source": "atlas"}],
    "dedup": {"threshold": 2},
    "split": {"test_fraction": 0.25, "k": 4},
    "seed": 7,
    "augment": {"rotation_max_deg": 10, "normalize": false},
    "train": {"max_epochs": 5},
    "scheduler": {"patience": 2},
    "stopper": {"patience": 4},
    "adamax": {"beta2": 0.99},
    "model": "tiny",
    "models": {"tiny": {"input_size": [4, 4], "feature_dim": 48, "extractor": "downsample"}},
    "threads": 2
  })");
  const RunConfig c = parse_run_config(j, "/base");
  CHECK(c.corpus_root == "/base/data");
  REQUIRE(c.class_map.size() == 1);
  CHECK(c.class_map[0].source == "atlas");
  CHECK(c.dedup_threshold == 2);
  CHECK(c.test_fraction == 0.25);
  CHECK(c.k == 4);
  CHECK(c.seed == 7);
  CHECK(c.augment.rotation_max_deg == 10.0);
  CHECK_FALSE(c.augment.normalize);
  CHECK(c.train.max_epochs == 5);
  CHECK(c.train.batch_size == 32);
  CHECK(c.scheduler.patience == 2);
  CHECK(c.stopper.patience == 4);
  CHECK(c.beta2 == 0.99);
  CHECK(c.model_spec().input_width == 4);
  CHECK(c.threads == 2);
  CHECK_NOTHROW(c.validate_stages());
}

TEST_CASE("parse rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"sede": 1})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"split": {"kk": 1}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"seed": "x"})")), ConfigError);

  auto bad = [](const char* text) { return parse_run_config(json::parse(text)).validate_stages(); };
  CHECK_THROWS_AS(bad(R"({"split": {"test_fraction": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"split": {"k": 1}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"dedup": {"threshold": 65}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"scheduler": {"factor": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"augment": {"hflip_prob": -0.1}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"model": "nope"})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"models": {"m": {"extractor": "magic", "feature_dim": 3}}, "model": "m"})"), ConfigError);
}

TEST_CASE("full validation checks the filesystem") {
  TempDir dir("config");
  RunConfig c;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.corpus_root = dir.path();
  CHECK_NOTHROW(c.validate());
  c.class_map = {{"missing", "x", ""}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.class_map.clear();
  c.model = "davit_base";
  CHECK_THROWS_AS(c.validate(), ConfigError);  // external without features
  std::ofstream(dir / "f.csv") << "1,a\n";
  c.features = dir / "f.csv";
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("to_json round trips through the parser") {
  TempDir dir("config-rt");
  RunConfig c;
  c.corpus_root = dir.path();
  c.seed = 1234567890123ULL;
  c.k = 3;
  c.class_map = {{"a", "alpha", "src"}};
  const auto j = to_json(c);
  const RunConfig back = parse_run_config(json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());

  const auto path = dir / "cfg.json";
  std::ofstream(path) << j.dump(2);
  CHECK(to_json(load_run_config(path)).dump() == j.dump());
  std::ofstream(dir / "broken.json") << "{";
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ConfigError);
}

TEST_CASE("stage seeds differ") {
  CHECK(seeds::split(42) != seeds::folds(42));
  CHECK(seeds::augment(42) != seeds::train(42));
  CHECK(seeds::split(42) == derive_seed(42, "split"));
}
