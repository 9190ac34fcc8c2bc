#include "lesionkit/metrics.hpp"

#include "lesionkit/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <stdexcept>

namespace lesionkit {

ConfusionMatrix confusion_from_log(const PredictionLog& log,
                                   const std::vector<std::string>& classes) {
  ConfusionMatrix cm(classes);
  auto index = [&](const std::string& label) {
    const auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw DataError("unknown label '" + label + "' in prediction log");
    return static_cast<Eigen::Index>(it - classes.begin());
  };
  for (const auto& row : log.rows) ++cm.counts(index(row.true_label), index(row.pred_label));
  return cm;
}

std::vector<ClassTally> class_tallies(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  std::vector<ClassTally> out(static_cast<std::size_t>(cm.size()));
  for (Eigen::Index i = 0; i < cm.size(); ++i) {
    auto& t = out[static_cast<std::size_t>(i)];
    t.tp = cm.counts(i, i);
    t.fn = cm.counts.row(i).sum() - t.tp;
    t.fp = cm.counts.col(i).sum() - t.tp;
    t.tn = total - t.tp - t.fn - t.fp;
  }
  return out;
}

RowNormalized normalize_rows(const ConfusionMatrix& cm) {
  RowNormalized out{Eigen::MatrixXd::Zero(cm.size(), cm.size()),
                    std::vector<bool>(static_cast<std::size_t>(cm.size()), false)};
  for (Eigen::Index i = 0; i < cm.size(); ++i) {
    const std::int64_t support = cm.support(i);
    if (support == 0) {
      out.empty_rows[static_cast<std::size_t>(i)] = true;
      continue;
    }
    out.rates.row(i) = cm.counts.row(i).cast<double>() / static_cast<double>(support);
  }
  return out;
}

MetricReport compute_metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw std::invalid_argument("empty matrix");
  const auto n_classes = static_cast<double>(cm.size());
  const auto dtotal = static_cast<double>(total);

  MetricReport r;
  r.classes = cm.classes;
  r.confusion = cm.counts;
  r.accuracy_std = static_cast<double>(cm.counts.trace()) / dtotal;

  const auto tallies = class_tallies(cm);
  for (std::size_t i = 0; i < tallies.size(); ++i) {
    const auto& t = tallies[i];
    ClassMetrics c;
    c.name = i < cm.classes.size() ? cm.classes[i] : std::to_string(i);
    c.support = t.tp + t.fn;
    if (t.tp + t.fp > 0) {
      c.precision = static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fp);
    } else {
      r.warnings.push_back("precision undefined for class " + c.name + " (never predicted)");
    }
    if (c.support > 0) {
      c.recall = static_cast<double>(t.tp) / static_cast<double>(c.support);
    } else {
      r.warnings.push_back("recall undefined for class " + c.name + " (no support)");
    }
    if (c.precision + c.recall > 0.0)
      c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
    const double acc_i = static_cast<double>(t.tp + t.tn) / dtotal;
    const double w = static_cast<double>(c.support) / dtotal;

    r.accuracy_eq1.macro += acc_i / n_classes;
    r.accuracy_eq1.weighted += w * acc_i;
    r.precision.macro += c.precision / n_classes;
    r.precision.weighted += w * c.precision;
    r.recall.macro += c.recall / n_classes;
    r.recall.weighted += w * c.recall;
    r.f1.macro += c.f1 / n_classes;
    r.f1.weighted += w * c.f1;
    r.per_class.push_back(std::move(c));
  }
  r.row_normalized = normalize_rows(cm).rates;
  return r;
}

MetricReport aggregate_folds(const std::vector<std::pair<MetricReport, std::size_t>>& reports) {
  if (reports.empty()) throw std::invalid_argument("no fold reports to aggregate");
  const MetricReport& first = reports.front().first;
  double total_size = 0.0;
  for (const auto& [rep, size] : reports) {
    if (rep.classes != first.classes) throw DataError("fold reports disagree on classes");
    total_size += static_cast<double>(size);
  }
  if (total_size <= 0.0) throw std::invalid_argument("fold sizes sum to zero");

  MetricReport out;
  out.classes = first.classes;
  out.confusion = CountMatrix::Zero(first.confusion.rows(), first.confusion.cols());
  out.per_class.resize(first.per_class.size());
  for (std::size_t c = 0; c < out.per_class.size(); ++c) out.per_class[c].name = first.per_class[c].name;

  auto acc = [](Averaged& into, const Averaged& v, double w) {
    into.macro += w * v.macro;
    into.weighted += w * v.weighted;
  };
  std::set<std::string> warnings;
  for (const auto& [rep, size] : reports) {
    const double w = static_cast<double>(size) / total_size;
    out.accuracy_std += w * rep.accuracy_std;
    acc(out.accuracy_eq1, rep.accuracy_eq1, w);
    acc(out.precision, rep.precision, w);
    acc(out.recall, rep.recall, w);
    acc(out.f1, rep.f1, w);
    for (std::size_t c = 0; c < out.per_class.size(); ++c) {
      out.per_class[c].support += rep.per_class[c].support;
      out.per_class[c].precision += w * rep.per_class[c].precision;
      out.per_class[c].recall += w * rep.per_class[c].recall;
      out.per_class[c].f1 += w * rep.per_class[c].f1;
    }
    if (rep.confusion.size() == out.confusion.size()) out.confusion += rep.confusion;
    warnings.insert(rep.warnings.begin(), rep.warnings.end());
  }
  out.warnings.assign(warnings.begin(), warnings.end());
  ConfusionMatrix summed(out.classes);
  summed.counts = out.confusion;
  out.row_normalized = normalize_rows(summed).rates;
  return out;
}

namespace {

nlohmann::ordered_json averaged_json(const Averaged& a) {
  nlohmann::ordered_json j;
  j["macro"] = a.macro;
  j["weighted"] = a.weighted;
  return j;
}

Averaged averaged_from(const nlohmann::json& j) {
  return {j.at("macro").get<double>(), j.at("weighted").get<double>()};
}

}  // namespace

nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["classes"] = r.classes;
  j["accuracy_std"] = r.accuracy_std;
  j["accuracy_eq1"] = averaged_json(r.accuracy_eq1);
  j["precision"] = averaged_json(r.precision);
  j["recall"] = averaged_json(r.recall);
  j["f1"] = averaged_json(r.f1);
  auto& per = j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class) {
    nlohmann::ordered_json row;
    row["class"] = c.name;
    row["support"] = c.support;
    row["precision"] = c.precision;
    row["recall"] = c.recall;
    row["f1"] = c.f1;
    per.push_back(row);
  }
  auto& cm = j["confusion"] = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < r.confusion.cols(); ++k) row.push_back(r.confusion(i, k));
    cm.push_back(row);
  }
  auto& rn = j["row_normalized"] = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < r.row_normalized.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < r.row_normalized.cols(); ++k) row.push_back(r.row_normalized(i, k));
    rn.push_back(row);
  }
  j["warnings"] = r.warnings;
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  try {
    MetricReport r;
    r.classes = j.at("classes").get<std::vector<std::string>>();
    r.accuracy_std = j.at("accuracy_std").get<double>();
    r.accuracy_eq1 = averaged_from(j.at("accuracy_eq1"));
    r.precision = averaged_from(j.at("precision"));
    r.recall = averaged_from(j.at("recall"));
    r.f1 = averaged_from(j.at("f1"));
    for (const auto& row : j.at("per_class")) {
      r.per_class.push_back({row.at("class").get<std::string>(), row.at("support").get<std::int64_t>(),
                             row.at("precision").get<double>(), row.at("recall").get<double>(),
                             row.at("f1").get<double>()});
    }
    const auto& cm = j.at("confusion");
    const auto n = static_cast<Eigen::Index>(cm.size());
    r.confusion = CountMatrix::Zero(n, n);
    r.row_normalized = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        r.confusion(i, k) = cm.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<std::int64_t>();
        r.row_normalized(i, k) = j.at("row_normalized")
                                     .at(static_cast<std::size_t>(i))
                                     .at(static_cast<std::size_t>(k))
                                     .get<double>();
      }
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
}

MetricReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open metric report " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
}

void print_class_table(std::ostream& out, const MetricReport& r) {
  std::size_t width = 5;
  for (const auto& c : r.per_class) width = std::max(width, c.name.size());
  const auto w = static_cast<int>(width);
  out << std::left << std::setw(w) << "class" << std::right << std::setw(9) << "support"
      << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& c : r.per_class) {
    out << std::left << std::setw(w) << c.name << std::right << std::setw(9) << c.support
        << std::setw(11) << c.precision << std::setw(9) << c.recall << std::setw(9) << c.f1 << '\n';
  }
  out << std::left << std::setw(w) << "weighted" << std::right << std::setw(9) << r.confusion.sum()
      << std::setw(11) << r.precision.weighted << std::setw(9) << r.recall.weighted
      << std::setw(9) << r.f1.weighted << '\n';
  out << std::left << std::setw(w) << "macro" << std::right << std::setw(9) << ""
      << std::setw(11) << r.precision.macro << std::setw(9) << r.recall.macro << std::setw(9)
      << r.f1.macro << '\n';
  out << std::defaultfloat;
}

void write_class_csv(std::ostream& out, const MetricReport& r) {
  out << "class,support,precision,recall,f1\n";
  out << std::setprecision(17);
  for (const auto& c : r.per_class)
    out << c.name << ',' << c.support << ',' << c.precision << ',' << c.recall << ',' << c.f1 << '\n';
  out << std::defaultfloat << std::setprecision(6);
}

}  // namespace lesionkit
