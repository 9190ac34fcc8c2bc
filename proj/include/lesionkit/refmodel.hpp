#pragma once

#include "lesionkit/partition.hpp"
#include "lesionkit/rng.hpp"
#include "lesionkit/trainctl.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lesionkit {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense classification head: logits = W x + b.
template <typename Scalar = double>
struct LinearHead {
  Matrix<Scalar> weights;  // classes x dim
  Vector<Scalar> biases;   // classes

  static LinearHead zeros(Eigen::Index classes, Eigen::Index dim) {
    return {Matrix<Scalar>::Zero(classes, dim), Vector<Scalar>::Zero(classes)};
  }

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
  Eigen::Index num_params() const { return weights.size() + biases.size(); }

  /// Weights class by class, then biases.
  Vector<Scalar> flatten() const {
    Vector<Scalar> out(num_params());
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < weights.rows(); ++c)
      for (Eigen::Index d = 0; d < weights.cols(); ++d) out(k++) = weights(c, d);
    out.tail(biases.size()) = biases;
    return out;
  }

  void unflatten(const Eigen::Ref<const Vector<Scalar>>& flat) {
    if (flat.size() != num_params()) throw std::invalid_argument("parameter count mismatch");
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < weights.rows(); ++c)
      for (Eigen::Index d = 0; d < weights.cols(); ++d) weights(c, d) = flat(k++);
    biases = flat.tail(biases.size());
  }

  bool operator==(const LinearHead& o) const {
    return weights.rows() == o.weights.rows() && weights.cols() == o.weights.cols() &&
           weights == o.weights && biases == o.biases;
  }
};

/// Row-wise softmax with max subtraction.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> e = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
  return e.array().colwise() / e.rowwise().sum().array();
}

/// Row-wise log-softmax, computed without forming probabilities.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const Vector<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

/// Logits for a batch: one sample per row of `x`.
template <typename Scalar, typename Derived>
Matrix<Scalar> logits(const LinearHead<Scalar>& head, const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != head.dim()) throw std::invalid_argument("feature dimension mismatch");
  return (x * head.weights.transpose()).rowwise() + head.biases.transpose();
}

/// Class probabilities for one feature vector.
template <typename Scalar>
Vector<Scalar> forward(const LinearHead<Scalar>& head, const Eigen::Ref<const Vector<Scalar>>& x) {
  return softmax_rows(logits(head, x.transpose())).transpose();
}

template <typename Scalar>
struct LossGrad {
  Scalar loss = 0;
  LinearHead<Scalar> grad;
};

/// Mean cross-entropy over the batch and its analytic gradient,
/// d/dz = (softmax - onehot) / n.
template <typename Scalar, typename Derived>
LossGrad<Scalar> loss_and_grad(const LinearHead<Scalar>& head, const Eigen::MatrixBase<Derived>& x,
                               std::span<const int> labels) {
  const Eigen::Index n = x.rows();
  if (n == 0) throw std::invalid_argument("empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("label count mismatch");
  const Matrix<Scalar> log_p = log_softmax_rows(logits(head, x));
  Matrix<Scalar> delta = log_p.array().exp().matrix();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    if (y < 0 || y >= head.num_classes()) throw std::invalid_argument("label out of range");
    total -= log_p(i, y);
    delta(i, y) -= Scalar(1);
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  delta *= inv_n;
  LossGrad<Scalar> out;
  out.loss = total * inv_n;
  out.grad.weights = delta.transpose() * x;
  out.grad.biases = delta.colwise().sum().transpose();
  return out;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

template <typename Scalar = double>
struct AdaMaxState {
  Vector<Scalar> m;  // first moment
  Vector<Scalar> u;  // exponentially weighted infinity norm
  std::int64_t t = 0;
  Scalar alpha = Scalar(0.002);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);

  static AdaMaxState fresh(Eigen::Index n, Scalar alpha = Scalar(0.002),
                           Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999)) {
    return {Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n), 0, alpha, beta1, beta2};
  }
};

/// One AdaMax update, in place:
///   m <- b1 m + (1 - b1) g,  u <- max(b2 u, |g|),
///   theta <- theta - alpha / (1 - b1^t) * m / u.
/// Components with u == 0 are left untouched.
template <typename Scalar>
void adamax_step(Eigen::Ref<Vector<Scalar>> params, const Eigen::Ref<const Vector<Scalar>>& grads,
                 AdaMaxState<Scalar>& s) {
  if (params.size() != grads.size()) throw std::invalid_argument("gradient shape mismatch");
  if (!grads.allFinite()) throw std::domain_error("non-finite gradient");
  if (s.m.size() != params.size()) {
    if (s.t != 0) throw std::invalid_argument("optimizer state shape mismatch");
    s.m = Vector<Scalar>::Zero(params.size());
    s.u = Vector<Scalar>::Zero(params.size());
  }
  ++s.t;
  s.m = s.beta1 * s.m + (Scalar(1) - s.beta1) * grads;
  s.u = (s.beta2 * s.u).cwiseMax(grads.cwiseAbs());
  const Scalar step = s.alpha / (Scalar(1) - std::pow(s.beta1, static_cast<Scalar>(s.t)));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (s.u(i) > Scalar(0)) params(i) -= step * s.m(i) / s.u(i);
  }
}

/// Feature vectors keyed by record id; one sample per row.
struct FeatureTable {
  std::vector<std::string> classes;
  std::vector<std::string> ids;
  std::vector<int> labels;
  Matrix<double> features;  // rows x dim

  Eigen::Index dim() const { return features.cols(); }
  std::size_t rows() const { return ids.size(); }

  /// Rows whose id satisfies `keep`, in table order.
  FeatureTable select(const std::function<bool(const std::string&)>& keep) const;
};

/// Text format: "dim,class_0,...", then "id,label_index,f_1,...,f_dim".
void write_feature_table(std::ostream& out, const FeatureTable& t);
FeatureTable read_feature_table(std::istream& in);
void save_feature_table(const std::filesystem::path& path, const FeatureTable& t);
FeatureTable load_feature_table(const std::filesystem::path& path);
/// Shape, finiteness, label range and id uniqueness problems.
std::vector<Violation> validate_feature_table(const FeatureTable& t);

struct PredictionRow {
  std::string id;
  std::string true_label;
  std::string pred_label;
  std::vector<double> probs;
};

struct PredictionLog {
  std::vector<std::string> classes;
  std::vector<PredictionRow> rows;
};

/// Text format: header "id,true,pred,p_0,...,p_{N-1}", labels by class name.
void write_prediction_log(std::ostream& out, const PredictionLog& log);
/// Classes come from the caller; the file carries only their count.
PredictionLog read_prediction_log(std::istream& in, const std::vector<std::string>& classes);
void save_prediction_log(const std::filesystem::path& path, const PredictionLog& log);
PredictionLog load_prediction_log(const std::filesystem::path& path,
                                  const std::vector<std::string>& classes);
/// Unknown labels, wrong probability count, rows not summing to 1 within `tol`.
std::vector<Violation> validate_prediction_log(const PredictionLog& log, double tol = 1e-5);

PredictionLog predict(const LinearHead<double>& head, const FeatureTable& table);
/// Only rows assigned to `subset` by the split.
PredictionLog predict(const LinearHead<double>& head, const FeatureTable& table,
                      const SplitPlan& split, Subset subset = Subset::test);

EvalResult evaluate_head(const LinearHead<double>& head, const Matrix<double>& x,
                         std::span<const int> labels);

/// Softmax head trained by mini-batch AdaMax; plugs into run_training_loop.
class HeadTrainer final : public Trainer {
 public:
  /// Called at the start of every epoch with the training ids (row order);
  /// may rewrite the training features in place (online augmentation).
  using EpochFeatures = std::function<void(int epoch, const std::vector<std::string>& train_ids,
                                           Matrix<double>& train_x)>;

  HeadTrainer(std::vector<std::string> train_ids, Matrix<double> train_x,
              std::vector<int> train_y, Matrix<double> val_x,
              std::vector<int> val_y, std::vector<std::string> classes, std::uint64_t seed,
              double beta1 = 0.9, double beta2 = 0.999);

  void set_epoch_features(EpochFeatures hook) { epoch_features_ = std::move(hook); }

  double train_one_epoch(int epoch, double lr, int batch_size) override;
  EvalResult evaluate() override;
  std::vector<double> snapshot() const override;
  void restore(std::span<const double> params) override;
  std::vector<std::string> class_names() const override { return classes_; }

  const LinearHead<double>& head() const { return head_; }

 private:
  std::vector<std::string> train_ids_;
  Matrix<double> train_x_;
  std::vector<int> train_y_;
  Matrix<double> val_x_;
  std::vector<int> val_y_;
  std::vector<std::string> classes_;
  std::uint64_t seed_;
  LinearHead<double> head_;
  AdaMaxState<double> opt_;
  EpochFeatures epoch_features_;
};

struct HeadTrainingSettings {
  TrainLoopConfig loop;
  PlateauScheduler scheduler;
  EarlyStopper stopper;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  CheckpointPolicy checkpoint;
};

struct HeadFit {
  LinearHead<double> head;
  TrainingHistory history;
};

/// Train on every fold but `validation_fold` and validate on that fold. Rows
/// absent from the fold plan (the test set) are ignored. A zero epoch budget
/// returns the zero-initialised head.
HeadFit train_head(const FeatureTable& table, const FoldPlan& folds, int validation_fold,
                   const HeadTrainingSettings& settings,
                   const HeadTrainer::EpochFeatures& epoch_features = {});

}  // namespace lesionkit
