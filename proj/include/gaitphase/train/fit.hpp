#pragma once

// Epoch loop shared by pre-training and fine-tuning: schedule, validation,
// best-epoch tracking, early stopping and a JSON-lines log.

#include "gaitphase/numerics/optim.hpp"
#include "gaitphase/numerics/rng.hpp"

#include "json.hpp"

#include <chrono>
#include <numeric>
#include <ostream>
#include <vector>

namespace gaitphase {

struct FitConfig {
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 1024;
  // 0 = every batch; otherwise cap the batches per epoch (desk runs).
  std::size_t max_batches_per_epoch = 0;
  ScheduleConfig schedule;
  AdamConfig adam;
};

inline void to_json(nlohmann::json& j, const ScheduleConfig& s) {
  j = {{"warmup_epochs", s.warmup_epochs},
       {"warmup_start", s.warmup_start},
       {"plateau_patience", s.plateau_patience},
       {"min_factor", s.min_factor}};
}
inline void from_json(const nlohmann::json& j, ScheduleConfig& s) {
  const ScheduleConfig d;
  s.warmup_epochs = j.value("warmup_epochs", d.warmup_epochs);
  s.warmup_start = j.value("warmup_start", d.warmup_start);
  s.plateau_patience = j.value("plateau_patience", d.plateau_patience);
  s.min_factor = j.value("min_factor", d.min_factor);
}
inline void to_json(nlohmann::json& j, const AdamConfig& a) {
  j = {{"base_lr", a.base_lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& a) {
  const AdamConfig d;
  a.base_lr = j.value("base_lr", d.base_lr);
  a.beta1 = j.value("beta1", d.beta1);
  a.beta2 = j.value("beta2", d.beta2);
  a.epsilon = j.value("epsilon", d.epsilon);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FitConfig, epochs, patience, batch_size, max_batches_per_epoch,
                                                schedule, adam)

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr_factor = 0.0;
  double wall_ms = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EpochRecord, epoch, train_loss, val_loss, lr_factor, wall_ms)

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool early_stopped = false;
};

inline void check_loss(double loss, const char* what) {
  if (!std::isfinite(loss)) throw std::runtime_error(std::string(what) + ": loss diverged (non-finite)");
}

// Shuffled minibatches of [0, n); the final short batch is kept.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, RngStream& rng,
                                                          std::size_t max_batches = 0) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    if (max_batches && out.size() == max_batches) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

// train_epoch(epoch, lr_factor) -> mean train loss; validate() -> val loss;
// on_best() snapshots the weights. Stops after `patience` epochs without a
// new best validation loss.
template <typename TrainEpoch, typename Validate, typename OnBest>
FitResult fit(const FitConfig& cfg, TrainEpoch&& train_epoch, Validate&& validate, OnBest&& on_best,
              std::ostream* log = nullptr, const char* what = "training") {
  FitResult res;
  std::vector<double> val_history;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_factor = lr_factor(static_cast<int>(epoch), val_history, cfg.schedule);
    rec.train_loss = train_epoch(epoch, rec.lr_factor);
    check_loss(rec.train_loss, what);
    rec.val_loss = validate();
    check_loss(rec.val_loss, what);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    val_history.push_back(rec.val_loss);
    res.history.push_back(rec);
    if (log) *log << nlohmann::json(rec).dump() << '\n' << std::flush;

    if (epoch == 0 || rec.val_loss < res.best_val) {
      res.best_val = rec.val_loss;
      res.best_epoch = epoch;
      since_best = 0;
      on_best();
    } else if (++since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  return res;
}

}  // namespace gaitphase
