#pragma once

#include "gaitphase/numerics/tensor.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace gaitphase {

struct AdamConfig {
  double base_lr = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected moments. Moments are allocated lazily on the first
// step and keyed by position, so the parameter list must keep its order.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  void step(std::span<Parameter<T>* const> params, double lr_factor) {
    if (first_.empty()) {
      for (auto* p : params) {
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
      }
    }
    if (first_.size() != params.size()) throw std::logic_error("adam: parameter list changed between steps");
    ++step_;
    const double lr = cfg_.base_lr * lr_factor;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T{1} - b1) * g;
        v[i] = b2 * v[i] + (T{1} - b2) * g * g;
        const double mhat = static_cast<double>(m[i]) / c1;
        const double vhat = static_cast<double>(v[i]) / c2;
        p.value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
};

struct ScheduleConfig {
  int warmup_epochs = 20;
  double warmup_start = 0.2;
  int plateau_patience = 10;
  double min_factor = 0.1;
};

// Learning-rate multiplier for `epoch` given the validation losses of all
// earlier epochs. Half-cosine ramp from warmup_start to 1 over the warmup,
// then halving after every plateau_patience epochs without improvement,
// floored at min_factor. Stall counting starts when the warmup ends.
inline double lr_factor(int epoch, std::span<const double> val_loss_history, const ScheduleConfig& cfg = {}) {
  if (epoch < 0) throw std::invalid_argument("lr_factor: negative epoch");
  if (epoch <= cfg.warmup_epochs) {
    if (cfg.warmup_epochs == 0) return 1.0;
    const double t = static_cast<double>(epoch) / cfg.warmup_epochs;
    return cfg.warmup_start + (1.0 - cfg.warmup_start) * (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
  }
  double factor = 1.0;
  double best = HUGE_VAL;
  int stall = 0;
  const std::size_t seen = std::min<std::size_t>(static_cast<std::size_t>(epoch), val_loss_history.size());
  for (std::size_t i = 0; i < seen; ++i) {
    const double loss = val_loss_history[i];
    if (loss < best) {
      best = loss;
      stall = 0;
      continue;
    }
    if (static_cast<int>(i) < cfg.warmup_epochs) continue;
    if (++stall >= cfg.plateau_patience) {
      factor = std::max(cfg.min_factor, factor / 2.0);
      stall = 0;
    }
  }
  return factor;
}

}  // namespace gaitphase
