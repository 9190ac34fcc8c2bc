#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lesionkit {

/// Reduce-on-plateau over validation loss (min mode, zero min-delta, no
/// cooldown). A reduction fires on the patience-th consecutive epoch without
/// strict improvement.
struct PlateauScheduler {
  double lr = 0.002;
  double factor = 1e-3;
  int patience = 3;
  double min_lr = 0.0;
  std::optional<double> best_loss;
  int bad_epochs = 0;
  int reductions = 0;

  bool operator==(const PlateauScheduler&) const = default;
};

/// Stop once validation accuracy has failed to strictly improve for
/// `patience` consecutive epochs. Sticky.
struct EarlyStopper {
  int patience = 7;
  std::optional<double> best_acc;
  int bad_epochs = 0;
  bool stopped = false;

  bool operator==(const EarlyStopper&) const = default;
};

PlateauScheduler scheduler_step(PlateauScheduler s, double val_loss);
EarlyStopper stopper_step(EarlyStopper e, double val_acc);

struct TrainLoopConfig {
  int max_epochs = 50;
  int batch_size = 32;
  double initial_lr = 0.002;

  void validate() const;
};

/// Best-by-validation-accuracy checkpointing. An empty directory keeps the
/// best snapshot in memory only.
struct CheckpointPolicy {
  std::filesystem::path directory;
  std::string filename = "best.ckpt";
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// What the control loop needs from a model. Metrics must be epoch-atomic.
class Trainer {
 public:
  virtual ~Trainer() = default;
  /// One pass over the training data; returns mean training loss.
  virtual double train_one_epoch(int epoch, double lr, int batch_size) = 0;
  virtual EvalResult evaluate() = 0;
  virtual std::vector<double> snapshot() const = 0;
  virtual void restore(std::span<const double> params) = 0;
  /// Stored in checkpoint headers.
  virtual std::vector<std::string> class_names() const { return {}; }
};

namespace events {
inline constexpr const char* kCheckpoint = "checkpoint";
inline constexpr const char* kLrReduced = "lr_reduced";
inline constexpr const char* kEarlyStop = "early_stop";
}  // namespace events

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::vector<std::string> events;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when no epoch ran
  double best_val_acc = 0.0;
  double final_lr = 0.0;
  bool early_stopped = false;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Drive `trainer` for at most cfg.max_epochs epochs. The scheduler's lr is
/// reset to cfg.initial_lr. On exit the trainer holds the parameters of the
/// earliest epoch with the highest validation accuracy.
TrainingHistory run_training_loop(Trainer& trainer, const TrainLoopConfig& cfg,
                                  PlateauScheduler scheduler, EarlyStopper stopper,
                                  const CheckpointPolicy& ckpt = {});

void write_history(std::ostream& out, const TrainingHistory& h);
TrainingHistory read_history(std::istream& in);
void save_history(const std::filesystem::path& path, const TrainingHistory& h);

// Checkpoint layout, all integers little-endian:
//   "LKCKPT\0\0" | u32 version | u32 n_classes | n_classes x (u32 len, bytes)
//   | u64 n_params | n_params x f64 | u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::string> classes;
  std::vector<double> params;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
/// Throws DataError on bad magic, version, truncation or checksum mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace lesionkit
