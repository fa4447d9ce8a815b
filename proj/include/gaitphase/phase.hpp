#pragma once

// Gait phase state, its polar encoding, and wrap-aware error metrics.
//
// Phase is a fraction of the gait cycle in [0, 1); the rate is the per-sample
// phase increment (1/L for a stride of L samples). Externally both are
// reported in percent.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gaitphase {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr std::size_t kMinStrideSamples = 20;
inline constexpr double kMinRate = 1e-4;
inline constexpr double kMaxRate = 0.05;

struct PhaseState {
  double phase = 0.0;
  double rate = 0.01;

  friend bool operator==(const PhaseState&, const PhaseState&) = default;
};

// [cos 2*pi*phase, sin 2*pi*phase, rate]
struct PhaseVector {
  std::array<double, 3> g{1.0, 0.0, 0.01};

  double& operator[](std::size_t i) { return g[i]; }
  double operator[](std::size_t i) const { return g[i]; }
};

// Wrap into [0, 1). Guards the x == 1.0 rounding case of fmod on negatives.
inline double wrap_phase(double x) {
  double w = x - std::floor(x);
  if (w >= 1.0) w = 0.0;
  return w;
}

inline std::vector<PhaseState> stride_phase_labels(std::size_t stride_length) {
  if (stride_length < kMinStrideSamples)
    throw std::invalid_argument("stride_phase_labels: stride of " + std::to_string(stride_length) +
                                " samples is below the minimum of " + std::to_string(kMinStrideSamples));
  std::vector<PhaseState> out(stride_length);
  const double len = static_cast<double>(stride_length);
  for (std::size_t n = 0; n < stride_length; ++n) out[n] = {static_cast<double>(n) / len, 1.0 / len};
  return out;
}

inline PhaseVector encode_polar(const PhaseState& s) {
  const double angle = kTwoPi * s.phase;
  return PhaseVector{{std::cos(angle), std::sin(angle), s.rate}};
}

// Norm of (g0, g1) is ignored; the rate is clamped to [kMinRate, kMaxRate].
inline PhaseState decode_polar(const PhaseVector& g) {
  if (g[0] == 0.0 && g[1] == 0.0) throw std::invalid_argument("decode_polar: zero (cos, sin) components");
  const double phase = wrap_phase(std::atan2(g[1], g[0]) / kTwoPi);
  return {phase, std::clamp(g[2], kMinRate, kMaxRate)};
}

// Shortest distance on the unit circle, in [0, 0.5].
inline double circular_error(double a, double b) {
  const double d = std::fabs(a - b);
  return std::min(d, 1.0 - d);
}

namespace detail {
inline void require_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}
}  // namespace detail

// Root-mean-square circular phase error, percent.
inline double phase_rmse(std::span<const PhaseState> pred, std::span<const PhaseState> truth) {
  detail::require_pair(pred.size(), truth.size(), "phase_rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = circular_error(pred[i].phase, truth[i].phase);
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(pred.size())) * 100.0;
}

// Same without wrap handling; reported alongside for transparency.
inline double phase_rmse_naive(std::span<const PhaseState> pred, std::span<const PhaseState> truth) {
  detail::require_pair(pred.size(), truth.size(), "phase_rmse_naive");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i].phase - truth[i].phase;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(pred.size())) * 100.0;
}

// Mean absolute rate error, percent.
inline double rate_mae(std::span<const PhaseState> pred, std::span<const PhaseState> truth) {
  detail::require_pair(pred.size(), truth.size(), "rate_mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i].rate - truth[i].rate);
  return acc / static_cast<double>(pred.size()) * 100.0;
}

}  // namespace gaitphase
