#pragma once

#include "lesionkit/refmodel.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lesionkit {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  CountMatrix counts;

  explicit ConfusionMatrix(std::vector<std::string> names = {})
      : classes(std::move(names)),
        counts(CountMatrix::Zero(static_cast<Eigen::Index>(classes.size()),
                                 static_cast<Eigen::Index>(classes.size()))) {}

  Eigen::Index size() const { return counts.rows(); }
  std::int64_t total() const { return counts.sum(); }
  std::int64_t support(Eigen::Index i) const { return counts.row(i).sum(); }
};

/// One-vs-rest tallies for one class.
struct ClassTally {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
};

std::vector<ClassTally> class_tallies(const ConfusionMatrix& cm);

/// Macro: plain mean over classes. Weighted: mean weighted by class support.
struct Averaged {
  double macro = 0.0;
  double weighted = 0.0;
};

struct ClassMetrics {
  std::string name;
  std::int64_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RowNormalized {
  Eigen::MatrixXd rates;
  std::vector<bool> empty_rows;
};

struct MetricReport {
  std::vector<std::string> classes;
  double accuracy_std = 0.0;  // trace / total
  Averaged accuracy_eq1;      // one-vs-rest (TP + TN) / total
  Averaged precision;
  Averaged recall;
  Averaged f1;
  std::vector<ClassMetrics> per_class;
  CountMatrix confusion;
  Eigen::MatrixXd row_normalized;
  std::vector<std::string> warnings;
};

/// Throws DataError on labels outside `classes`.
ConfusionMatrix confusion_from_log(const PredictionLog& log, const std::vector<std::string>& classes);

/// Zero denominators yield 0 and a warning. Throws std::invalid_argument
/// ("empty matrix") when total is 0.
MetricReport compute_metrics(const ConfusionMatrix& cm);

/// Each scalar is the fold-size-weighted mean; confusion counts are summed.
MetricReport aggregate_folds(const std::vector<std::pair<MetricReport, std::size_t>>& reports);

/// Each row divided by its support; empty rows stay zero and are flagged.
RowNormalized normalize_rows(const ConfusionMatrix& cm);

nlohmann::ordered_json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);
void save_report(const std::filesystem::path& path, const MetricReport& r);
MetricReport load_report(const std::filesystem::path& path);

/// Aligned per-class table: class, support, precision, recall, f1.
void print_class_table(std::ostream& out, const MetricReport& r);
void write_class_csv(std::ostream& out, const MetricReport& r);

}  // namespace lesionkit
