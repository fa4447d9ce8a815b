#pragma once

#include "gaitphase/numerics/tensor.hpp"
#include "gaitphase/phase.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gaitphase {

// IMU channel layout: for each segment {L thigh, R thigh, P pelvis} the
// columns accx accy accz gyrx gyry gyrz pitch. Rows 21..23 hold the polar
// phase state (cos, sin, rate) when a window carries phase channels.
inline constexpr std::size_t kImuChannels = 21;
inline constexpr std::size_t kPhaseChannels = 3;
inline constexpr std::size_t kModelChannels = kImuChannels + kPhaseChannels;
inline constexpr double kSampleRate = 100.0;

inline constexpr std::array<std::string_view, 3> kSegments{"L", "R", "P"};
inline constexpr std::array<std::string_view, 7> kAxes{"accx", "accy", "accz", "gyrx", "gyry", "gyrz", "pitch"};

enum class Segment : std::size_t { LeftThigh = 0, RightThigh = 1, Pelvis = 2 };
enum class Axis : std::size_t { AccX = 0, AccY, AccZ, GyrX, GyrY, GyrZ, Pitch };

constexpr std::size_t channel_index(Segment s, Axis a) {
  return static_cast<std::size_t>(s) * kAxes.size() + static_cast<std::size_t>(a);
}

inline std::string channel_name(std::size_t index) {
  return std::string(kSegments.at(index / kAxes.size())) + "_" + std::string(kAxes.at(index % kAxes.size()));
}

enum class Terrain : std::uint8_t { LW = 0, SA, SD, SLA, SLD };
inline constexpr std::size_t kTerrainCount = 5;
inline constexpr std::array<Terrain, kTerrainCount> kAllTerrains{Terrain::LW, Terrain::SA, Terrain::SD, Terrain::SLA,
                                                                 Terrain::SLD};

inline std::string_view terrain_name(Terrain t) {
  static constexpr std::array<std::string_view, kTerrainCount> names{"LW", "SA", "SD", "SLA", "SLD"};
  return names[static_cast<std::size_t>(t)];
}

inline std::optional<Terrain> parse_terrain(std::string_view s) {
  for (auto t : kAllTerrains)
    if (terrain_name(t) == s) return t;
  return std::nullopt;
}

struct Recording {
  int subject_id = 0;
  double sample_rate = kSampleRate;
  Tensor<double> channels;  // [21, T]
  std::vector<Terrain> terrain;
  std::vector<std::size_t> stride_starts;
  std::vector<PhaseState> phase_truth;

  std::size_t length() const { return terrain.size(); }

  std::size_t stride_end(std::size_t stride) const {
    return stride + 1 < stride_starts.size() ? stride_starts[stride + 1] : length();
  }

  // Index of the stride containing `sample`.
  std::size_t stride_of(std::size_t sample) const {
    auto it = std::upper_bound(stride_starts.begin(), stride_starts.end(), sample);
    return static_cast<std::size_t>(it - stride_starts.begin()) - 1;
  }

  double value(std::size_t channel, std::size_t sample) const { return channels[channel * length() + sample]; }
};

// Phase labels implied by stride boundaries; strides end at the next start
// (the last one at T).
inline std::vector<PhaseState> phase_from_strides(const std::vector<std::size_t>& starts, std::size_t length) {
  std::vector<PhaseState> out;
  out.reserve(length);
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const std::size_t end = s + 1 < starts.size() ? starts[s + 1] : length;
    if (end <= starts[s]) throw std::invalid_argument("recording: stride starts must be strictly increasing");
    const auto labels = stride_phase_labels(end - starts[s]);
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

// Throws std::invalid_argument naming the first violated invariant.
inline void validate(const Recording& rec) {
  const std::size_t t = rec.length();
  if (t == 0) throw std::invalid_argument("recording: empty");
  if (rec.channels.shape() != Shape{kImuChannels, t})
    throw std::invalid_argument("recording: channels must be [21, T], got " + shape_str(rec.channels.shape()));
  if (rec.phase_truth.size() != t) throw std::invalid_argument("recording: phase_truth length mismatch");
  if (rec.stride_starts.empty() || rec.stride_starts.front() != 0)
    throw std::invalid_argument("recording: first stride must start at sample 0");
  if (rec.stride_starts.back() >= t) throw std::invalid_argument("recording: stride start beyond end");
  const auto expected = phase_from_strides(rec.stride_starts, t);
  for (std::size_t n = 0; n < t; ++n)
    if (std::fabs(expected[n].phase - rec.phase_truth[n].phase) > 1e-6 ||
        std::fabs(expected[n].rate - rec.phase_truth[n].rate) > 1e-6)
      throw std::invalid_argument("recording: phase label at sample " + std::to_string(n) +
                                  " inconsistent with stride boundaries");
  if (!rec.channels.all_finite()) throw std::invalid_argument("recording: non-finite channel value");
}

}  // namespace gaitphase
