#include "lesionkit/refmodel.hpp"

#include "lesionkit/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace lesionkit {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& s) {
  double v = 0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError("not a number: '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError("not an integer: '" + s + "'");
  return v;
}

void put_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

FeatureTable FeatureTable::select(const std::function<bool(const std::string&)>& keep) const {
  std::vector<Eigen::Index> rows_kept;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (keep(ids[i])) rows_kept.push_back(static_cast<Eigen::Index>(i));
  FeatureTable out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(rows_kept.size()), features.cols());
  for (std::size_t r = 0; r < rows_kept.size(); ++r) {
    const auto i = rows_kept[r];
    out.ids.push_back(ids[static_cast<std::size_t>(i)]);
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(i);
  }
  return out;
}

void write_feature_table(std::ostream& out, const FeatureTable& t) {
  out << t.dim();
  for (const auto& c : t.classes) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out << t.ids[i] << ',' << t.labels[i];
    for (Eigen::Index d = 0; d < t.dim(); ++d) {
      out << ',';
      put_double(out, t.features(static_cast<Eigen::Index>(i), d));
    }
    out << '\n';
  }
}

FeatureTable read_feature_table(std::istream& in) {
  FeatureTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("feature table is empty");
  auto header = split_csv(strip_cr(line));
  if (header.size() < 2) throw DataError("feature table header needs dim and classes");
  const int dim = parse_int(header[0]);
  if (dim <= 0) throw DataError("feature dimension must be positive");
  t.classes.assign(header.begin() + 1, header.end());

  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != static_cast<std::size_t>(dim) + 2) {
      throw DataError("feature table line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim + 2) + " fields, got " + std::to_string(cells.size()));
    }
    t.ids.push_back(cells[0]);
    t.labels.push_back(parse_int(cells[1]));
    for (std::size_t k = 2; k < cells.size(); ++k) values.push_back(parse_double(cells[k]));
  }
  t.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(t.ids.size()), dim);
  return t;
}

void save_feature_table(const std::filesystem::path& path, const FeatureTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_feature_table(out, t);
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature table " + path.string());
  return read_feature_table(in);
}

std::vector<Violation> validate_feature_table(const FeatureTable& t) {
  std::vector<Violation> out;
  if (t.classes.empty()) out.push_back({"classes", "no classes declared"});
  if (t.labels.size() != t.ids.size() || static_cast<std::size_t>(t.features.rows()) != t.ids.size())
    out.push_back({"shape", "ids, labels and feature rows disagree in count"});
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    if (!seen.insert(t.ids[i]).second) out.push_back({"duplicate id", t.ids[i]});
    if (i < t.labels.size() &&
        (t.labels[i] < 0 || static_cast<std::size_t>(t.labels[i]) >= t.classes.size()))
      out.push_back({"label range", t.ids[i] + " has label " + std::to_string(t.labels[i])});
    if (static_cast<Eigen::Index>(i) < t.features.rows() &&
        !t.features.row(static_cast<Eigen::Index>(i)).allFinite())
      out.push_back({"non-finite", t.ids[i]});
  }
  return out;
}

void write_prediction_log(std::ostream& out, const PredictionLog& log) {
  out << "id,true,pred";
  for (std::size_t c = 0; c < log.classes.size(); ++c) out << ",p_" << c;
  out << '\n';
  for (const auto& r : log.rows) {
    out << r.id << ',' << r.true_label << ',' << r.pred_label;
    for (double p : r.probs) {
      out << ',';
      put_double(out, p);
    }
    out << '\n';
  }
}

PredictionLog read_prediction_log(std::istream& in, const std::vector<std::string>& classes) {
  PredictionLog log;
  log.classes = classes;
  std::string line;
  if (!std::getline(in, line)) throw DataError("prediction log is empty");
  const auto header = split_csv(strip_cr(line));
  if (header.size() < 3 || header[0] != "id" || header[1] != "true" || header[2] != "pred")
    throw DataError("prediction log header must start with id,true,pred");
  const std::size_t n_probs = header.size() - 3;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw DataError("prediction log line " + std::to_string(line_no) + ": wrong field count");
    PredictionRow r{cells[0], cells[1], cells[2], {}};
    r.probs.reserve(n_probs);
    for (std::size_t k = 3; k < cells.size(); ++k) r.probs.push_back(parse_double(cells[k]));
    log.rows.push_back(std::move(r));
  }
  return log;
}

void save_prediction_log(const std::filesystem::path& path, const PredictionLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_prediction_log(out, log);
}

PredictionLog load_prediction_log(const std::filesystem::path& path,
                                  const std::vector<std::string>& classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open prediction log " + path.string());
  return read_prediction_log(in, classes);
}

std::vector<Violation> validate_prediction_log(const PredictionLog& log, double tol) {
  std::vector<Violation> out;
  const std::set<std::string> known(log.classes.begin(), log.classes.end());
  for (const auto& r : log.rows) {
    if (!known.count(r.true_label)) out.push_back({"unknown label", r.id + ": " + r.true_label});
    if (!known.count(r.pred_label)) out.push_back({"unknown label", r.id + ": " + r.pred_label});
    if (r.probs.size() != log.classes.size()) {
      out.push_back({"probability count", r.id + " has " + std::to_string(r.probs.size())});
      continue;
    }
    const double sum = std::accumulate(r.probs.begin(), r.probs.end(), 0.0);
    if (!(std::abs(sum - 1.0) <= tol))
      out.push_back({"probability sum", r.id + " sums to " + std::to_string(sum)});
  }
  return out;
}

PredictionLog predict(const LinearHead<double>& head, const FeatureTable& table) {
  PredictionLog log;
  log.classes = table.classes;
  if (table.rows() == 0) return log;
  const Matrix<double> p = softmax_rows(logits(head, table.features));
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto row = p.row(static_cast<Eigen::Index>(i));
    PredictionRow r;
    r.id = table.ids[i];
    r.true_label = table.classes.at(static_cast<std::size_t>(table.labels[i]));
    r.pred_label = table.classes.at(static_cast<std::size_t>(argmax(row)));
    for (Eigen::Index c = 0; c < row.size(); ++c) r.probs.push_back(row(c));
    log.rows.push_back(std::move(r));
  }
  return log;
}

PredictionLog predict(const LinearHead<double>& head, const FeatureTable& table,
                      const SplitPlan& split, Subset subset) {
  return predict(head, table.select([&](const std::string& id) {
    const auto it = split.assignment.find(id);
    return it != split.assignment.end() && it->second == subset;
  }));
}

EvalResult evaluate_head(const LinearHead<double>& head, const Matrix<double>& x,
                         std::span<const int> labels) {
  if (x.rows() == 0) return {0.0, 0.0};
  const Matrix<double> log_p = log_softmax_rows(logits(head, x));
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    loss -= log_p(i, y);
    if (argmax(log_p.row(i)) == y) ++correct;
  }
  const auto n = static_cast<double>(x.rows());
  return {loss / n, static_cast<double>(correct) / n};
}

HeadTrainer::HeadTrainer(std::vector<std::string> train_ids, Matrix<double> train_x,
                         std::vector<int> train_y, Matrix<double> val_x, std::vector<int> val_y,
                         std::vector<std::string> classes, std::uint64_t seed, double beta1,
                         double beta2)
    : train_ids_(std::move(train_ids)),
      train_x_(std::move(train_x)),
      train_y_(std::move(train_y)),
      val_x_(std::move(val_x)),
      val_y_(std::move(val_y)),
      classes_(std::move(classes)),
      seed_(seed),
      head_(LinearHead<double>::zeros(static_cast<Eigen::Index>(classes_.size()), train_x_.cols())) {
  opt_ = AdaMaxState<double>::fresh(head_.num_params(), 0.002, beta1, beta2);
}

double HeadTrainer::train_one_epoch(int epoch, double lr, int batch_size) {
  if (epoch_features_) epoch_features_(epoch, train_ids_, train_x_);
  const auto n = static_cast<std::size_t>(train_x_.rows());
  if (n == 0) throw DataError("no training rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Random rng(derive_seed(derive_seed(seed_, "batches"), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(std::span<std::size_t>(order));

  opt_.alpha = lr;
  Vector<double> params = head_.flatten();
  Matrix<double> batch_x;
  std::vector<int> batch_y;
  double loss_sum = 0.0;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t len = std::min(bs, n - start);
    batch_x.resize(static_cast<Eigen::Index>(len), train_x_.cols());
    batch_y.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      batch_x.row(static_cast<Eigen::Index>(i)) = train_x_.row(static_cast<Eigen::Index>(order[start + i]));
      batch_y[i] = train_y_[order[start + i]];
    }
    const auto lg = loss_and_grad(head_, batch_x, batch_y);
    loss_sum += lg.loss * static_cast<double>(len);
    adamax_step<double>(params, lg.grad.flatten(), opt_);
    head_.unflatten(params);
  }
  return loss_sum / static_cast<double>(n);
}

EvalResult HeadTrainer::evaluate() { return evaluate_head(head_, val_x_, val_y_); }

std::vector<double> HeadTrainer::snapshot() const {
  const Vector<double> flat = head_.flatten();
  return {flat.data(), flat.data() + flat.size()};
}

void HeadTrainer::restore(std::span<const double> params) {
  head_.unflatten(Eigen::Map<const Vector<double>>(params.data(), static_cast<Eigen::Index>(params.size())));
}

HeadFit train_head(const FeatureTable& table, const FoldPlan& folds, int validation_fold,
                   const HeadTrainingSettings& settings,
                   const HeadTrainer::EpochFeatures& epoch_features) {
  if (validation_fold < 0 || validation_fold >= folds.k)
    throw std::invalid_argument("validation fold out of range");
  if (!validate_feature_table(table).empty()) throw DataError("invalid feature table");
  auto in_fold = [&](const std::string& id, bool want_validation) {
    const auto it = folds.fold_of.find(id);
    if (it == folds.fold_of.end()) return false;
    return (it->second == validation_fold) == want_validation;
  };
  const FeatureTable train = table.select([&](const std::string& id) { return in_fold(id, false); });
  const FeatureTable val = table.select([&](const std::string& id) { return in_fold(id, true); });
  if (train.rows() == 0 || val.rows() == 0)
    throw DataError("fold " + std::to_string(validation_fold) + " leaves an empty train or validation set");

  HeadTrainer trainer(train.ids, train.features, train.labels, val.features, val.labels,
                      table.classes, derive_seed(settings.seed, static_cast<std::uint64_t>(validation_fold)),
                      settings.beta1, settings.beta2);
  if (epoch_features) trainer.set_epoch_features(epoch_features);
  HeadFit fit;
  fit.history = run_training_loop(trainer, settings.loop, settings.scheduler, settings.stopper,
                                  settings.checkpoint);
  fit.head = trainer.head();
  return fit;
}

}  // namespace lesionkit
