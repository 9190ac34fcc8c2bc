#include "lesionkit/errors.hpp"
#include "lesionkit/metrics.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace lesionkit;

namespace {

ConfusionMatrix from_rows(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows.size(); ++i) names.push_back("k" + std::to_string(i));
  ConfusionMatrix cm(names);
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (auto v : row) cm.counts(r, c++) = v;
    ++r;
  }
  return cm;
}

PredictionLog random_log(Random& rng, int classes, int rows) {
  PredictionLog log;
  for (int c = 0; c < classes; ++c) log.classes.push_back("c" + std::to_string(c));
  for (int i = 0; i < rows; ++i) {
    const auto t = rng.below(static_cast<std::uint64_t>(classes));
    // Mostly correct, like a real classifier.
    const auto p = rng.bernoulli(0.6) ? t : rng.below(static_cast<std::uint64_t>(classes));
    log.rows.push_back({"r" + std::to_string(i), log.classes[t], log.classes[p], {}});
  }
  return log;
}

struct Oracle {
  double acc_std, acc_eq1_macro;
  double p_macro, r_macro, f_macro, p_w, r_w, f_w;
};

// Counts straight from the rows, no confusion matrix in between.
Oracle brute_force(const PredictionLog& log) {
  const std::size_t n = log.classes.size();
  const double total = static_cast<double>(log.rows.size());
  Oracle o{};
  double correct = 0;
  for (const auto& r : log.rows) correct += r.true_label == r.pred_label;
  o.acc_std = correct / total;
  for (const auto& name : log.classes) {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& r : log.rows) {
      const bool t = r.true_label == name, p = r.pred_label == name;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      tn += !t && !p;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const double w = (tp + fn) / total;
    o.acc_eq1_macro += (tp + tn) / total / static_cast<double>(n);
    o.p_macro += prec / static_cast<double>(n);
    o.r_macro += rec / static_cast<double>(n);
    o.f_macro += f1 / static_cast<double>(n);
    o.p_w += w * prec;
    o.r_w += w * rec;
    o.f_w += w * f1;
  }
  return o;
}

}  // namespace

TEST_CASE("worked three-class matrix") {
  const MetricReport r = compute_metrics(from_rows({{5, 1, 0}, {1, 3, 1}, {0, 0, 4}}));
  CHECK(r.precision.weighted == doctest::Approx(0.79667).epsilon(1e-5));
  CHECK(r.recall.weighted == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(r.f1.weighted - 0.79259) < 1e-5);
  CHECK(r.accuracy_std == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.accuracy_eq1.macro == doctest::Approx(0.86667).epsilon(1e-5));
  REQUIRE(r.per_class.size() == 3);
  CHECK(r.per_class[2].precision == doctest::Approx(0.8));
  CHECK(r.per_class[2].recall == 1.0);
  CHECK(r.per_class[1].support == 5);
  CHECK(r.warnings.empty());
}

TEST_CASE("perfect and degenerate matrices") {
  const MetricReport perfect = compute_metrics(from_rows({{3, 0}, {0, 9}}));
  for (double v : {perfect.accuracy_std, perfect.precision.macro, perfect.precision.weighted,
                   perfect.recall.macro, perfect.f1.macro, perfect.f1.weighted, perfect.accuracy_eq1.macro})
    CHECK(v == 1.0);
  const MetricReport one = compute_metrics(from_rows({{7}}));
  CHECK(one.f1.weighted == 1.0);
  CHECK(one.accuracy_eq1.macro == 1.0);
  CHECK_THROWS_AS(compute_metrics(from_rows({{0, 0}, {0, 0}})), std::invalid_argument);
}

TEST_CASE("zero denominators give zero and a warning") {
  // Class 1 is never predicted and class 2 never occurs.
  const MetricReport r = compute_metrics(from_rows({{4, 0, 0}, {2, 0, 0}, {0, 0, 0}}));
  CHECK(r.per_class[1].precision == 0.0);
  CHECK(r.per_class[2].recall == 0.0);
  CHECK(r.per_class[2].f1 == 0.0);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("confusion_from_log") {
  PredictionLog log;
  log.classes = {"a", "b"};
  log.rows = {{"1", "a", "b", {}}, {"2", "a", "a", {}}, {"3", "b", "b", {}}};
  const ConfusionMatrix cm = confusion_from_log(log, log.classes);
  CHECK(cm.counts(0, 1) == 1);
  CHECK(cm.counts(0, 0) == 1);
  CHECK(cm.counts(1, 1) == 1);
  CHECK(cm.total() == 3);
  CHECK(confusion_from_log({log.classes, {}}, log.classes).total() == 0);
  log.rows.push_back({"4", "c", "a", {}});
  CHECK_THROWS_AS(confusion_from_log(log, log.classes), DataError);
}

TEST_CASE("compute_metrics matches the brute-force oracle on random logs") {
  Random rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 1 + static_cast<int>(rng.below(6));
    const int rows = 1 + static_cast<int>(rng.below(200));
    const PredictionLog log = random_log(rng, classes, rows);
    const Oracle o = brute_force(log);
    const MetricReport r = compute_metrics(confusion_from_log(log, log.classes));
    CAPTURE(trial);
    CHECK(std::abs(r.accuracy_std - o.acc_std) <= 1e-12);
    CHECK(std::abs(r.accuracy_eq1.macro - o.acc_eq1_macro) <= 1e-12);
    CHECK(std::abs(r.precision.macro - o.p_macro) <= 1e-12);
    CHECK(std::abs(r.recall.macro - o.r_macro) <= 1e-12);
    CHECK(std::abs(r.f1.macro - o.f_macro) <= 1e-12);
    CHECK(std::abs(r.precision.weighted - o.p_w) <= 1e-12);
    CHECK(std::abs(r.recall.weighted - o.r_w) <= 1e-12);
    CHECK(std::abs(r.f1.weighted - o.f_w) <= 1e-12);
    CHECK(std::abs(r.recall.weighted - r.accuracy_std) <= 1e-12);
  }
}

TEST_CASE("tallies partition the total") {
  Random rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const PredictionLog log = random_log(rng, 2 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(80)));
    const ConfusionMatrix cm = confusion_from_log(log, log.classes);
    for (const auto& t : class_tallies(cm)) CHECK(t.tp + t.fp + t.fn + t.tn == cm.total());
  }
}

TEST_CASE("equal supports make macro and weighted agree") {
  const MetricReport r = compute_metrics(from_rows({{3, 1, 0}, {0, 2, 2}, {1, 1, 2}}));
  CHECK(std::abs(r.precision.macro - r.precision.weighted) < 1e-12);
  CHECK(std::abs(r.recall.macro - r.recall.weighted) < 1e-12);
  CHECK(std::abs(r.f1.macro - r.f1.weighted) < 1e-12);
}

TEST_CASE("metrics are invariant under relabeling") {
  Random rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    ConfusionMatrix cm(std::vector<std::string>(static_cast<std::size_t>(n), "x"));
    for (Eigen::Index i = 0; i < cm.counts.size(); ++i) cm.counts.data()[i] = static_cast<std::int64_t>(rng.below(20));
    cm.counts(0, 0) += 1;
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    ConfusionMatrix p = cm;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) p.counts(perm[i], perm[j]) = cm.counts(i, j);
    const auto a = compute_metrics(cm), b = compute_metrics(p);
    CHECK(std::abs(a.f1.weighted - b.f1.weighted) < 1e-12);
    CHECK(std::abs(a.precision.macro - b.precision.macro) < 1e-12);
    CHECK(std::abs(a.accuracy_eq1.macro - b.accuracy_eq1.macro) < 1e-12);
  }
}

TEST_CASE("fold aggregation is a size-weighted mean") {
  MetricReport a = compute_metrics(from_rows({{4, 1}, {0, 5}}));
  MetricReport b = compute_metrics(from_rows({{10, 0}, {0, 20}}));
  a.f1.weighted = 0.8;
  b.f1.weighted = 1.0;
  const MetricReport agg = aggregate_folds({{a, 10}, {b, 30}});
  CHECK(agg.f1.weighted == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(agg.confusion(0, 0) == 14);
  CHECK(agg.confusion.sum() == 40);
  CHECK(agg.accuracy_std == doctest::Approx((a.accuracy_std * 10 + b.accuracy_std * 30) / 40).epsilon(1e-12));

  const MetricReport same = aggregate_folds({{b, 3}, {b, 3}, {b, 3}});
  CHECK(same.precision.macro == b.precision.macro);
  CHECK_THROWS_AS(aggregate_folds({}), std::invalid_argument);

  Random rng(77);
  std::vector<std::pair<MetricReport, std::size_t>> folds;
  double num = 0, den = 0;
  for (int k = 0; k < 5; ++k) {
    MetricReport r = compute_metrics(confusion_from_log(random_log(rng, 3, 50), {"c0", "c1", "c2"}));
    const std::size_t size = 10 + rng.below(30);
    num += r.recall.macro * static_cast<double>(size);
    den += static_cast<double>(size);
    folds.emplace_back(std::move(r), size);
  }
  CHECK(std::abs(aggregate_folds(folds).recall.macro - num / den) < 1e-12);
}

TEST_CASE("row normalization") {
  // 100 lichen images: 84 correct, 11 called dermatitis, 5 elsewhere.
  ConfusionMatrix cm({"lichen_planus", "dermatitis", "other"});
  cm.counts << 84, 11, 5, 0, 10, 0, 0, 0, 0;
  const RowNormalized r = normalize_rows(cm);
  CHECK(r.rates(0, 0) == doctest::Approx(0.84));
  CHECK(r.rates(0, 1) == doctest::Approx(0.11));
  CHECK(r.rates(1, 1) == 1.0);
  CHECK(r.rates.row(2).isZero());
  CHECK(r.empty_rows == std::vector<bool>{false, false, true});
}

TEST_CASE("report JSON round trip and tables") {
  const MetricReport r = compute_metrics(from_rows({{5, 1, 0}, {1, 3, 1}, {0, 0, 4}}));
  const auto j = to_json(r);
  const MetricReport back = report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.classes == r.classes);
  CHECK(back.f1.weighted == r.f1.weighted);
  CHECK(back.accuracy_eq1.macro == r.accuracy_eq1.macro);
  CHECK(back.confusion == r.confusion);
  CHECK(back.per_class.size() == 3);
  CHECK(back.per_class[1].recall == r.per_class[1].recall);
  CHECK(to_json(back).dump() == j.dump());

  std::ostringstream table, csv;
  print_class_table(table, r);
  write_class_csv(csv, r);
  CHECK(table.str().find("k1") != std::string::npos);
  CHECK(csv.str().rfind("class,support,precision,recall,f1\n", 0) == 0);
}
