#include "lesionkit/errors.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/refmodel.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace lesionkit;

namespace {

Matrix<double> random_matrix(Random& rng, Eigen::Index r, Eigen::Index c, double scale) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

/// Max-norm relative error between the analytic gradient and central differences.
double fd_relative_error(const LinearHead<double>& head, const Matrix<double>& x,
                         const std::vector<int>& y, double h) {
  const Vector<double> analytic = loss_and_grad(head, x, std::span<const int>(y)).grad.flatten();
  const Vector<double> theta = head.flatten();
  Vector<double> numeric(theta.size());
  LinearHead<double> probe = head;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector<double> t = theta;
    t(i) += h;
    probe.unflatten(t);
    const double up = loss_and_grad(probe, x, std::span<const int>(y)).loss;
    t(i) -= 2 * h;
    probe.unflatten(t);
    const double down = loss_and_grad(probe, x, std::span<const int>(y)).loss;
    numeric(i) = (up - down) / (2 * h);
  }
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

/// `per_class` points around well separated means, folds dealt round robin.
FeatureTable gaussian_blobs(int classes, int per_class, int dim, double spread, std::uint64_t seed) {
  Random rng(seed);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, spread);
  FeatureTable t;
  Matrix<double> means = random_matrix(rng, classes, dim, 3.0);
  t.features.resize(classes * per_class, dim);
  for (int c = 0; c < classes; ++c) t.classes.push_back("c" + std::to_string(c));
  for (int i = 0; i < classes * per_class; ++i) {
    const int c = i % classes;
    t.ids.push_back("s" + std::to_string(i));
    t.labels.push_back(c);
    for (int d = 0; d < dim; ++d) t.features(i, d) = means(c, d) + noise(gen);
  }
  return t;
}

FoldPlan round_robin_folds(const FeatureTable& t, int k) {
  FoldPlan f{k, 0, {}};
  for (std::size_t i = 0; i < t.rows(); ++i) f.fold_of[t.ids[i]] = static_cast<int>((i / 5) % k);
  return f;
}

double weighted_f1(const PredictionLog& log) {
  return compute_metrics(confusion_from_log(log, log.classes)).f1.weighted;
}

}  // namespace

TEST_CASE("softmax rows sum to one and survive large logits") {
  Matrix<double> z(2, 3);
  z << 1000, 1001, 1002, -5, 0, 5;
  const auto p = softmax_rows(z);
  CHECK(p.allFinite());
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  CHECK(p(0, 2) > p(0, 1));
  const auto lp = log_softmax_rows(z);
  CHECK((lp.array().exp().matrix() - p).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("flatten orders weights class by class then biases") {
  LinearHead<double> h = LinearHead<double>::zeros(2, 3);
  h.weights << 1, 2, 3, 4, 5, 6;
  h.biases << 7, 8;
  const Vector<double> f = h.flatten();
  for (int i = 0; i < 8; ++i) CHECK(f(i) == i + 1);
  LinearHead<double> g = LinearHead<double>::zeros(2, 3);
  g.unflatten(f);
  CHECK(g == h);
  CHECK_THROWS_AS(g.unflatten(Vector<double>::Zero(3)), std::invalid_argument);
}

TEST_CASE("zero head gives uniform probabilities and log(C) loss") {
  const auto h = LinearHead<double>::zeros(4, 2);
  Matrix<double> x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  const std::vector<int> y = {0, 1, 3};
  const auto lg = loss_and_grad(h, x, std::span<const int>(y));
  CHECK(lg.loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(forward<double>(h, x.row(0).transpose()).isApproxToConstant(0.25));
}

TEST_CASE("analytic gradient matches central differences") {
  Random rng(1234);
  double worst = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(5));
    const int dim = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(8));
    LinearHead<double> h{random_matrix(rng, classes, dim, 1.0), random_matrix(rng, classes, 1, 1.0)};
    const Matrix<double> x = random_matrix(rng, n, dim, 2.0);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    worst = std::max(worst, fd_relative_error(h, x, y, 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss_and_grad rejects bad batches") {
  const auto h = LinearHead<double>::zeros(2, 2);
  Matrix<double> x(1, 2);
  x << 1, 1;
  const std::vector<int> bad = {2};
  CHECK_THROWS_AS(loss_and_grad(h, x, std::span<const int>(bad)), std::invalid_argument);
  const std::vector<int> none;
  CHECK_THROWS_AS(loss_and_grad(h, Matrix<double>(0, 2), std::span<const int>(none)), std::invalid_argument);
  const Matrix<double> wide(1, 3);
  const std::vector<int> one = {0};
  CHECK_THROWS_AS(loss_and_grad(h, wide, std::span<const int>(one)), std::invalid_argument);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  Vector<double> v(4);
  v << 0.25, 0.25, 0.25, 0.25;
  CHECK(argmax(v) == 0);
  v << 0.1, 0.4, 0.4, 0.1;
  CHECK(argmax(v) == 1);
}

TEST_CASE("AdaMax constant gradient moves exactly alpha per step") {
  Vector<double> theta = Vector<double>::Zero(3);
  Vector<double> g(3);
  g << 1.0, -2.5, 0.0;
  auto s = AdaMaxState<double>::fresh(3);
  for (int t = 1; t <= 100; ++t) {
    const Vector<double> before = theta;
    adamax_step<double>(theta, g, s);
    CHECK(std::abs((before(0) - theta(0)) - 0.002) <= 1e-15);
    CHECK(std::abs((theta(1) - before(1)) - 0.002) <= 1e-15);
    CHECK(theta(2) == 0.0);
  }
  CHECK(s.t == 100);
}

TEST_CASE("AdaMax first two steps") {
  Vector<double> theta = Vector<double>::Zero(1);
  const Vector<double> g = Vector<double>::Ones(1);
  auto s = AdaMaxState<double>::fresh(1);
  adamax_step<double>(theta, g, s);
  CHECK(theta(0) == doctest::Approx(-0.002).epsilon(1e-13));
  adamax_step<double>(theta, g, s);
  CHECK(theta(0) == doctest::Approx(-0.004).epsilon(1e-13));
}

TEST_CASE("AdaMax quadratic matches the scripted reference run") {
  Vector<double> theta = Vector<double>::Zero(1);
  auto s = AdaMaxState<double>::fresh(1, 0.1);
  for (int i = 0; i < 200; ++i) {
    const Vector<double> g = Vector<double>::Constant(1, 2.0 * (theta(0) - 3.0));
    adamax_step<double>(theta, g, s);
  }
  CHECK(std::abs(theta(0) - 3.0) < 0.05);
  CHECK(theta(0) == doctest::Approx(2.999907306318168).epsilon(1e-10));
}

TEST_CASE("AdaMax guards") {
  Vector<double> theta = Vector<double>::Ones(2);
  auto s = AdaMaxState<double>::fresh(2);
  adamax_step<double>(theta, Vector<double>::Zero(2), s);
  CHECK(theta == Vector<double>::Ones(2));
  Vector<double> g(2);
  g << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adamax_step<double>(theta, g, s), std::domain_error);
  CHECK_THROWS_AS(adamax_step<double>(theta, Vector<double>::Zero(3), s), std::invalid_argument);
}

TEST_CASE("feature table text format") {
  FeatureTable t;
  t.classes = {"psoriasis", "healthy"};
  t.ids = {"a", "b"};
  t.labels = {1, 0};
  t.features.resize(2, 2);
  t.features << 0.1, -2.5e-300, 1.0 / 3.0, 7;
  std::ostringstream out;
  write_feature_table(out, t);
  CHECK(out.str().rfind("2,psoriasis,healthy\na,1,0.10000000000000001,", 0) == 0);
  std::istringstream in(out.str());
  const FeatureTable back = read_feature_table(in);
  CHECK(back.classes == t.classes);
  CHECK(back.ids == t.ids);
  CHECK(back.labels == t.labels);
  CHECK(back.features == t.features);
  CHECK(validate_feature_table(back).empty());

  FeatureTable bad = t;
  bad.labels[0] = 5;
  bad.ids[1] = "a";
  bad.features(0, 0) = std::nan("");
  CHECK(validate_feature_table(bad).size() == 3);

  std::istringstream ragged("2,x,y\na,0,1.0\n");
  CHECK_THROWS_AS(read_feature_table(ragged), DataError);
}

TEST_CASE("prediction log text format") {
  PredictionLog log;
  log.classes = {"x", "y", "z"};
  log.rows = {{"id1", "x", "y", {0.2, 0.5, 0.3}}, {"id2", "z", "z", {0.0, 0.0, 1.0}}};
  std::ostringstream out;
  write_prediction_log(out, log);
  CHECK(out.str().rfind("id,true,pred,p_0,p_1,p_2\nid1,x,y,", 0) == 0);
  std::istringstream in(out.str());
  const PredictionLog back = read_prediction_log(in, log.classes);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].pred_label == "y");
  CHECK(back.rows[0].probs == log.rows[0].probs);
  CHECK(validate_prediction_log(back).empty());

  PredictionLog bad = log;
  bad.rows[0].probs = {0.5, 0.6, 0.0};
  bad.rows[1].true_label = "w";
  CHECK(validate_prediction_log(bad).size() == 2);
}

TEST_CASE("predict respects the split and argmax") {
  FeatureTable t = gaussian_blobs(3, 4, 2, 0.01, 5);
  LinearHead<double> h = LinearHead<double>::zeros(3, 2);
  const PredictionLog all = predict(h, t);
  REQUIRE(all.rows.size() == 12);
  for (const auto& r : all.rows) CHECK(r.pred_label == "c0");  // uniform output, tie to class 0
  SplitPlan split;
  for (std::size_t i = 0; i < t.rows(); ++i) split.assignment[t.ids[i]] = i < 3 ? Subset::test : Subset::trainval;
  CHECK(predict(h, t, split).rows.size() == 3);
  CHECK(predict(h, t, split, Subset::trainval).rows.size() == 9);
}

TEST_CASE("separable two-class data is fit perfectly") {
  FeatureTable t;
  t.classes = {"neg", "pos"};
  Random rng(8);
  t.features.resize(200, 2);
  for (int i = 0; i < 200; ++i) {
    const int c = i % 2;
    const double x = rng.uniform(-1, 1);
    const double y = rng.uniform(0.2, 1.5) * (c ? 1 : -1);  // margin 0.2 around y = 0
    t.ids.push_back("p" + std::to_string(i));
    t.labels.push_back(c);
    t.features.row(i) << x, y;
  }
  // Validate on a copy of the training data; only the training pass matters here.
  HeadTrainer trainer(t.ids, t.features, t.labels, t.features, t.labels, t.classes, 3);
  int reached = 0;
  for (int epoch = 1; epoch <= 50 && !reached; ++epoch) {
    trainer.train_one_epoch(epoch, 0.05, 32);
    if (evaluate_head(trainer.head(), t.features, t.labels).accuracy == 1.0) reached = epoch;
  }
  CHECK(reached > 0);
}

TEST_CASE("Gaussian blobs reach high validation F1") {
  const FeatureTable t = gaussian_blobs(5, 100, 8, 0.5, 21);
  const FoldPlan folds = round_robin_folds(t, 5);
  HeadTrainingSettings s;
  s.loop = {50, 32, 0.002};
  s.seed = 42;
  for (int fold = 0; fold < 5; ++fold) {
    const HeadFit fit = train_head(t, folds, fold, s);
    const auto val = t.select([&](const std::string& id) { return folds.fold_of.at(id) == fold; });
    CAPTURE(fold);
    CHECK(weighted_f1(predict(fit.head, val)) >= 0.95);
  }
}

TEST_CASE("training is deterministic and a zero budget keeps the zero head") {
  const FeatureTable t = gaussian_blobs(3, 20, 4, 1.0, 2);
  const FoldPlan folds = round_robin_folds(t, 3);
  HeadTrainingSettings s;
  s.loop = {5, 8, 0.01};
  s.seed = 9;
  const HeadFit a = train_head(t, folds, 1, s), b = train_head(t, folds, 1, s);
  CHECK(a.head == b.head);
  CHECK(a.history.epochs == b.history.epochs);

  s.loop.max_epochs = 0;
  const HeadFit z = train_head(t, folds, 1, s);
  CHECK(z.head == LinearHead<double>::zeros(3, 4));
  CHECK(z.history.epochs.empty());
  CHECK_THROWS_AS(train_head(t, folds, 3, s), std::invalid_argument);
}

TEST_CASE("epoch feature hook sees every epoch and the training ids") {
  const FeatureTable t = gaussian_blobs(2, 10, 2, 0.3, 4);
  const FoldPlan folds = round_robin_folds(t, 2);
  HeadTrainingSettings s;
  s.loop = {3, 4, 0.01};
  std::vector<int> seen;
  std::size_t rows = 0;
  train_head(t, folds, 0, s, [&](int epoch, const std::vector<std::string>& ids, Matrix<double>& x) {
    seen.push_back(epoch);
    rows = ids.size();
    CHECK(x.rows() == static_cast<Eigen::Index>(ids.size()));
  });
  CHECK(seen == std::vector<int>{1, 2, 3});
  CHECK(rows == 10);
}
