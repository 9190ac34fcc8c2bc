#include "lesionkit/trainctl.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/image.hpp"
#include "lesionkit/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>

namespace lesionkit {

PlateauScheduler scheduler_step(PlateauScheduler s, double val_loss) {
  if (!std::isfinite(val_loss)) throw InvalidMetricError();
  if (!s.best_loss || val_loss < *s.best_loss) {
    s.best_loss = val_loss;
    s.bad_epochs = 0;
    return s;
  }
  if (++s.bad_epochs >= s.patience) {
    s.lr = std::max(s.lr * s.factor, s.min_lr);
    s.bad_epochs = 0;
    ++s.reductions;
  }
  return s;
}

EarlyStopper stopper_step(EarlyStopper e, double val_acc) {
  if (std::isnan(val_acc)) throw InvalidMetricError();
  if (val_acc < 0.0 || val_acc > 1.0) throw std::invalid_argument("accuracy outside [0, 1]");
  if (e.stopped) return e;
  if (!e.best_acc || val_acc > *e.best_acc) {
    e.best_acc = val_acc;
    e.bad_epochs = 0;
  } else if (++e.bad_epochs >= e.patience) {
    e.stopped = true;
  }
  return e;
}

void TrainLoopConfig::validate() const {
  if (max_epochs <= 0) throw ConfigError("train.max_epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (!(initial_lr > 0.0)) throw ConfigError("train.initial_lr must be positive");
}

TrainingHistory run_training_loop(Trainer& trainer, const TrainLoopConfig& cfg,
                                  PlateauScheduler scheduler, EarlyStopper stopper,
                                  const CheckpointPolicy& ckpt) {
  TrainingHistory history;
  scheduler.lr = cfg.initial_lr;
  std::vector<double> best_params;
  const bool to_disk = !ckpt.directory.empty();
  const auto ckpt_path = ckpt.directory / ckpt.filename;
  if (to_disk) std::filesystem::create_directories(ckpt.directory);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = scheduler.lr;
    try {
      rec.train_loss = trainer.train_one_epoch(epoch, scheduler.lr, cfg.batch_size);
      const EvalResult ev = trainer.evaluate();
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy;

      if (history.best_epoch == 0 || ev.accuracy > history.best_val_acc) {
        history.best_epoch = epoch;
        history.best_val_acc = ev.accuracy;
        best_params = trainer.snapshot();
        if (to_disk) write_checkpoint(ckpt_path, {trainer.class_names(), best_params});
        rec.events.emplace_back(events::kCheckpoint);
      }

      const int reductions = scheduler.reductions;
      scheduler = scheduler_step(scheduler, ev.loss);
      if (scheduler.reductions != reductions) rec.events.emplace_back(events::kLrReduced);

      stopper = stopper_step(stopper, ev.accuracy);
      if (stopper.stopped) rec.events.emplace_back(events::kEarlyStop);
    } catch (const std::exception& e) {
      throw TrainingError(epoch, e.what());
    }
    history.epochs.push_back(std::move(rec));
    if (stopper.stopped) {
      history.early_stopped = true;
      break;
    }
  }

  history.final_lr = scheduler.lr;
  if (history.best_epoch > 0) {
    if (to_disk) {
      const Checkpoint c = read_checkpoint(ckpt_path);
      trainer.restore(c.params);
    } else {
      trainer.restore(best_params);
    }
  }
  return history;
}

void write_history(std::ostream& out, const TrainingHistory& h) {
  for (const auto& e : h.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_acc"] = e.val_acc;
    j["events"] = e.events;
    out << j.dump() << '\n';
  }
}

TrainingHistory read_history(std::istream& in) {
  TrainingHistory h;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      EpochRecord e;
      e.epoch = j.at("epoch").get<int>();
      e.lr = j.at("lr").get<double>();
      e.train_loss = j.at("train_loss").get<double>();
      e.val_loss = j.at("val_loss").get<double>();
      e.val_acc = j.at("val_acc").get<double>();
      e.events = j.at("events").get<std::vector<std::string>>();
      if (std::find(e.events.begin(), e.events.end(), events::kCheckpoint) != e.events.end()) {
        h.best_epoch = e.epoch;
        h.best_val_acc = e.val_acc;
      }
      if (std::find(e.events.begin(), e.events.end(), events::kEarlyStop) != e.events.end())
        h.early_stopped = true;
      h.epochs.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed history: ") + e.what());
  }
  return h;
}

void save_history(const std::filesystem::path& path, const TrainingHistory& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_history(out, h);
}

namespace {

constexpr std::string_view kMagic{"LKCKPT\0\0", 8};

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{b_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError("checkpoint truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  std::vector<std::uint8_t> b(kMagic.begin(), kMagic.end());
  put_u32(b, kCheckpointVersion);
  put_u32(b, static_cast<std::uint32_t>(c.classes.size()));
  for (const auto& name : c.classes) {
    put_u32(b, static_cast<std::uint32_t>(name.size()));
    b.insert(b.end(), name.begin(), name.end());
  }
  put_u64(b, c.params.size());
  for (double p : c.params) put_u64(b, std::bit_cast<std::uint64_t>(p));
  put_u64(b, checksum(b));
  return b;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 8) throw DataError("checkpoint truncated");
  Reader r(bytes);
  if (r.str(kMagic.size()) != kMagic) throw DataError("not a checkpoint file");
  const auto version = r.uint(4);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto n_classes = r.uint(4);
  for (std::uint64_t i = 0; i < n_classes; ++i) {
    const auto len = r.uint(4);
    c.classes.push_back(r.str(len));
  }
  const auto n_params = r.uint(8);
  if (n_params > r.remaining() / 8) throw DataError("checkpoint truncated");
  c.params.reserve(n_params);
  for (std::uint64_t i = 0; i < n_params; ++i) c.params.push_back(std::bit_cast<double>(r.uint(8)));
  const std::size_t body = r.pos();
  const auto stored = r.uint(8);
  if (r.remaining() != 0) throw DataError("trailing bytes after checkpoint");
  if (stored != checksum(bytes.first(body))) throw DataError("checkpoint checksum mismatch");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace lesionkit
