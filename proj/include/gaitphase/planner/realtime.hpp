#pragma once

// Per-sample streaming loop: window assembly, forward pass, decode, plan.

#include "gaitphase/data/windows.hpp"
#include "gaitphase/planner/planner.hpp"

#include <chrono>
#include <thread>

namespace gaitphase {

// Holds the last L_B normalized IMU samples in a ring and assembles the
// [1, 24, L_B] model input (phase rows zero) on demand.
template <typename T>
class WindowRing {
 public:
  WindowRing(std::size_t lookback, NormStats stats) : lookback_(lookback), stats_(std::move(stats)) {
    if (lookback_ == 0) throw std::invalid_argument("window ring: lookback must be positive");
    if (stats_.mean.size() != kImuChannels || stats_.std.size() != kImuChannels)
      throw std::invalid_argument("window ring: normalization statistics must cover 21 channels");
    ring_.assign(kImuChannels * lookback_, T{});
  }

  void push(std::span<const double> sample) {
    if (sample.size() != kImuChannels) throw std::invalid_argument("window ring: expected 21 channel values");
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      if (!std::isfinite(sample[c])) throw std::runtime_error("window ring: non-finite sensor value");
      const double inv = 1.0 / std::max(stats_.std[c], kNormStdFloor);
      ring_[c * lookback_ + head_] = static_cast<T>((sample[c] - stats_.mean[c]) * inv);
    }
    head_ = (head_ + 1) % lookback_;
    ++seen_;
  }

  bool full() const { return seen_ >= lookback_; }
  std::size_t lookback() const { return lookback_; }

  // Oldest sample first, matching the offline window layout.
  void assemble(Tensor<T>& x) const {
    if (x.shape() != Shape{1, kModelChannels, lookback_}) x = Tensor<T>({1, kModelChannels, lookback_});
    T* dst = x.ptr();
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      const T* row = ring_.data() + c * lookback_;
      T* out = dst + c * lookback_;
      std::copy(row + head_, row + lookback_, out);
      std::copy(row, row + head_, out + (lookback_ - head_));
    }
    std::fill(dst + kImuChannels * lookback_, dst + kModelChannels * lookback_, T{});
  }

 private:
  std::size_t lookback_;
  NormStats stats_;
  std::vector<T> ring_;
  std::size_t head_ = 0;
  std::size_t seen_ = 0;
};

struct StreamOutput {
  std::optional<PlanStep> plan;  // empty while the window is filling
  double latency_ms = 0.0;
};

template <typename T, typename Model>
class StreamingEstimator {
 public:
  StreamingEstimator(const Model& model, NormStats stats, PlannerConfig cfg, TemplateProvider provider)
      : model_(model), ring_(model.config().lookback, std::move(stats)), planner_(cfg, std::move(provider)) {}

  // One real-time tick; latency covers everything from the raw sample to the
  // planned target.
  StreamOutput tick(std::span<const double> sample, const std::string& terrain) {
    const auto t0 = std::chrono::steady_clock::now();
    StreamOutput out;
    ring_.push(sample);
    if (ring_.full()) {
      ring_.assemble(x_);
      const Tensor<T> y = model_.predict(x_);
      const PhaseVector g{{static_cast<double>(y[0]), static_cast<double>(y[1]), static_cast<double>(y[2])}};
      out.plan = planner_.step(g, terrain);
    }
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

  const Planner& planner() const { return planner_; }

 private:
  const Model& model_;
  WindowRing<T> ring_;
  Planner planner_;
  Tensor<T> x_;
};

struct LatencyReport {
  std::size_t samples = 0;
  double median_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  std::size_t deadline_misses = 0;
  double deadline_ms = 10.0;
  bool paced = false;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LatencyReport, samples, median_ms, p99_ms, max_ms, deadline_misses,
                                                deadline_ms, paced)

// Nearest-rank order statistics over per-sample latencies.
inline LatencyReport summarize_latency(std::vector<double> ms, double deadline_ms, bool paced) {
  if (ms.empty()) throw std::invalid_argument("latency: no samples");
  LatencyReport r;
  r.samples = ms.size();
  r.deadline_ms = deadline_ms;
  r.paced = paced;
  for (double v : ms)
    if (v > deadline_ms) ++r.deadline_misses;
  std::sort(ms.begin(), ms.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ms.size())));
    return ms[std::clamp<std::size_t>(k, 1, ms.size()) - 1];
  };
  r.median_ms = rank(0.5);
  r.p99_ms = rank(0.99);
  r.max_ms = ms.back();
  return r;
}

struct BenchOptions {
  std::size_t samples = 1000;
  std::size_t warmup = 100;
  bool paced = false;  // sleep to a 100 Hz tick between samples
};

// Streams `rec` (cycled if shorter than needed) through the full loop. The
// window is primed with L_B samples first, then `warmup` ticks are
// discarded before `samples` ticks are measured.
template <typename T, typename Model>
LatencyReport latency_bench(const Model& model, const NormStats& stats, const Recording& rec,
                            const TemplateSet& templates, const BenchOptions& opt = {}, const PlannerConfig& pcfg = {}) {
  if (opt.samples == 0) throw std::invalid_argument("latency_bench: samples must be positive");
  StreamingEstimator<T, Model> stream(model, stats, pcfg, template_lookup(templates));
  const std::size_t len = rec.length();
  std::vector<double> sample(kImuChannels);
  std::size_t n = 0;
  auto next = [&] {
    const std::size_t i = n++ % len;
    for (std::size_t c = 0; c < kImuChannels; ++c) sample[c] = rec.value(c, i);
    return stream.tick(sample, std::string(terrain_name(rec.terrain[i])));
  };
  const std::size_t prime = model.config().lookback > 0 ? model.config().lookback - 1 : 0;
  for (std::size_t i = 0; i < prime + opt.warmup; ++i) next();
  std::vector<double> ms;
  ms.reserve(opt.samples);
  const auto period = std::chrono::microseconds(static_cast<long>(1e6 / kSampleRate));
  auto deadline = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < opt.samples; ++i) {
    if (opt.paced) {
      deadline += period;
      std::this_thread::sleep_until(deadline);
    }
    ms.push_back(next().latency_ms);
  }
  return summarize_latency(std::move(ms), pcfg.deadline_ms, opt.paced);
}

}  // namespace gaitphase
