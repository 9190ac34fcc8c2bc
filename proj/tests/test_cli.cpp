#include "lesionkit/catalog.hpp"
#include "lesionkit/metrics.hpp"

#include "test_support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace lesionkit;
namespace fs = std::filesystem;
using lesionkit::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + LESIONKIT_CLI + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

nlohmann::json last_error(const Run& r) {
  const auto start = r.err.rfind("{\"error\"");
  REQUIRE(start != std::string::npos);
  return nlohmann::json::parse(r.err.substr(start, r.err.find('\n', start) - start));
}

void write_small_config(const fs::path& path, const fs::path& corpus) {
  nlohmann::json j;
  j["corpus_root"] = corpus.string();
  j["split"] = {{"test_fraction", 0.2}, {"k", 2}};
  j["train"] = {{"max_epochs", 3}, {"batch_size", 8}};
  std::ofstream(path) << j.dump(2);
}

}  // namespace

TEST_CASE("usage errors exit 2 with a JSON line") {
  TempDir dir("cli-usage");
  const Run none = cli(dir, "");
  CHECK(none.code == 2);
  CHECK(last_error(none)["error"] == "usage");

  const Run unknown = cli(dir, "frobnicate");
  CHECK(unknown.code == 2);

  const Run missing = cli(dir, "train-head --out " + (dir / "o").string());
  CHECK(missing.code == 2);

  const Run help = cli(dir, "--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("pipeline") != std::string::npos);
}

TEST_CASE("config and data errors map to exit codes 2 and 3") {
  TempDir dir("cli-errors");
  std::ofstream(dir / "bad.json") << R"({"split": {"k": 1}})";
  const Run bad_config = cli(dir, "split --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string());
  CHECK(bad_config.code == 2);
  CHECK(last_error(bad_config)["error"] == "config");

  const Run no_manifest = cli(dir, "dedup --out " + (dir / "o").string());
  CHECK(no_manifest.code == 3);
  CHECK(last_error(no_manifest)["exit"] == 3);

  const Run no_pipeline_config = cli(dir, "pipeline --out " + (dir / "o").string());
  CHECK(no_pipeline_config.code == 2);
}

TEST_CASE("stage by stage run on a small synthetic corpus") {
  TempDir dir("cli-stages");
  const fs::path work = dir / "work";
  Run r = cli(dir, "synth --per-class 12 --duplicates 3 --size 16 --out " + work.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("images: 60 distinct + 3 duplicates") != std::string::npos);
  CHECK(fs::exists(work / "config.json"));

  r = cli(dir, "ingest --root " + (work / "corpus").string() + " --out " + work.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("records: 63") != std::string::npos);
  CHECK(r.out.find("artifact: ") != std::string::npos);
  CHECK(fs::exists(work / "run_config.json"));

  r = cli(dir, "dedup --out " + work.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("kept: 60, removed: 3") != std::string::npos);
  const Manifest kept = load_manifest(work / "manifest.dedup.jsonl");
  CHECK(kept.records.size() == 60);
  CHECK(kept.records.front().hash.has_value());

  r = cli(dir, "split --k 3 --out " + work.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("fold2") != std::string::npos);
  CHECK(fs::exists(work / "split.jsonl"));

  r = cli(dir, "augment-preview --limit 2 --epoch 1 --model downsample-8 --out " + work.string());
  REQUIRE(r.code == 0);
  CHECK(std::distance(fs::directory_iterator(work / "preview"), fs::directory_iterator{}) == 2);
}

TEST_CASE("pipeline, then train-head, evaluate and report on its outputs") {
  TempDir dir("cli-pipeline");
  const fs::path work = dir / "work";
  REQUIRE(cli(dir, "synth --per-class 10 --size 16 --out " + work.string()).code == 0);
  write_small_config(dir / "cfg.json", work / "corpus");

  const fs::path run = dir / "run";
  Run r = cli(dir, "pipeline --config " + (dir / "cfg.json").string() + " --out " + run.string());
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const char* name : {"run_config.json", "manifest.jsonl", "manifest.dedup.jsonl", "removed.tsv",
                           "split.jsonl", "folds.jsonl", "features.csv", "metrics.json", "report.txt",
                           "heatmap.svg", "fold0/history.jsonl", "fold1/best.ckpt", "predictions_test.csv"})
    CHECK_MESSAGE(fs::exists(run / name), name);

  const fs::path again = dir / "again";
  r = cli(dir, "train-head --features " + (run / "features.csv").string() + " --split " +
                   (run / "split.jsonl").string() + " --folds " + (run / "folds.jsonl").string() +
                   " --config " + (dir / "cfg.json").string() + " --out " + again.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(again / "metrics.json") == slurp(run / "metrics.json"));

  const fs::path eval = dir / "eval";
  r = cli(dir, "evaluate --predictions " + (run / "fold0/predictions.csv").string() + " --features " +
                   (run / "features.csv").string() + " --out " + eval.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(eval / "metrics.json") == slurp(run / "fold0/metrics.json"));

  const fs::path rep = dir / "rep";
  r = cli(dir, "report --metrics downsample-8=" + (run / "metrics.json").string() + " --out " + rep.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("downsample-8") != std::string::npos);
  CHECK(fs::exists(rep / "heatmap_downsample-8.svg"));
}
