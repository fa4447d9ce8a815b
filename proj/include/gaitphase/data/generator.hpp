#pragma once

// Parametric multi-terrain gait generator with exact phase labels.
//
// Segment angles are short Fourier series of the gait phase; gyroscope
// channels are their analytic time derivatives and accelerometers combine
// gravity projected through the segment angle with the tangential and
// centripetal terms of a sensor mounted `imu_radius_m` from the joint.
// The first stride after a terrain change blends the outgoing and incoming
// templates linearly in phase.

#include "gaitphase/data/recording.hpp"
#include "gaitphase/numerics/rng.hpp"

#include "json.hpp"

#include <fstream>
#include <map>

namespace gaitphase {

// mean + scale * sum_k amp[k] sin(2 pi (k+1) phase + offset[k]), degrees.
struct FourierCurve {
  double mean = 0.0;
  std::array<double, 3> amp{};
  std::array<double, 3> offset{};

  double value(double phase, double scale = 1.0) const {
    double v = 0.0;
    for (std::size_t k = 0; k < 3; ++k) v += amp[k] * std::sin(kTwoPi * (k + 1) * phase + offset[k]);
    return mean + scale * v;
  }
  double d1(double phase, double scale = 1.0) const {
    double v = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double w = kTwoPi * (k + 1);
      v += amp[k] * w * std::cos(w * phase + offset[k]);
    }
    return scale * v;
  }
  double d2(double phase, double scale = 1.0) const {
    double v = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double w = kTwoPi * (k + 1);
      v -= amp[k] * w * w * std::sin(w * phase + offset[k]);
    }
    return scale * v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FourierCurve, mean, amp, offset)

struct TerrainProfile {
  FourierCurve thigh;
  FourierCurve pelvis;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TerrainProfile, thigh, pelvis)

struct GeneratorConfig {
  int version = 1;
  std::size_t strides_per_recording = 60;
  std::size_t stride_min = 80;
  std::size_t stride_max = 120;
  std::size_t min_dwell = 3;
  double switch_probability = 0.35;
  double noise_sigma = 0.02;
  std::array<double, 2> amplitude_scale{0.85, 1.15};
  std::array<double, 2> offset_deg{-3.0, 3.0};
  double imu_radius_m = 0.2;
  double gravity = 9.81;
  FourierCurve roll{0.0, {3.0, 0.5, 0.0}, {0.3, 1.1, 0.0}};
  FourierCurve yaw{0.0, {4.0, 0.8, 0.0}, {1.0, 0.2, 0.0}};
  std::map<std::string, TerrainProfile> terrains = default_terrains();

  static std::map<std::string, TerrainProfile> default_terrains() {
    return {
        {"LW", {{8.0, {22.0, 4.0, 1.0}, {1.2, 0.4, 2.0}}, {10.0, {1.0, 2.0, 0.4}, {0.5, 1.5, 0.2}}}},
        {"SA", {{22.0, {26.0, 5.0, 1.5}, {1.0, 0.9, 1.3}}, {14.0, {1.5, 2.5, 0.5}, {0.8, 1.2, 0.6}}}},
        {"SD", {{6.0, {17.0, 5.0, 2.0}, {1.5, 0.2, 2.4}}, {7.0, {1.2, 1.6, 0.3}, {0.2, 1.9, 0.9}}}},
        {"SLA", {{15.0, {25.0, 4.0, 1.0}, {1.1, 0.6, 1.8}}, {13.0, {1.3, 2.2, 0.4}, {0.6, 1.4, 0.4}}}},
        {"SLD", {{4.0, {19.0, 3.0, 1.5}, {1.4, 0.3, 2.2}}, {8.0, {1.1, 1.8, 0.3}, {0.3, 1.7, 0.7}}}},
    };
  }

  const TerrainProfile& profile(Terrain t) const {
    auto it = terrains.find(std::string(terrain_name(t)));
    if (it == terrains.end())
      throw std::invalid_argument("generator config: no profile for terrain " + std::string(terrain_name(t)));
    return it->second;
  }

  void validate() const {
    if (noise_sigma < 0.0) throw std::invalid_argument("generator config: noise_sigma must be >= 0");
    if (min_dwell < 3) throw std::invalid_argument("generator config: min_dwell must be >= 3 strides");
    if (stride_min < kMinStrideSamples || stride_max < stride_min)
      throw std::invalid_argument("generator config: stride bounds must satisfy 20 <= min <= max");
    if (strides_per_recording < min_dwell)
      throw std::invalid_argument("generator config: recording shorter than one terrain dwell");
    if (!(switch_probability >= 0.0 && switch_probability <= 1.0))
      throw std::invalid_argument("generator config: switch_probability must be in [0, 1]");
    if (amplitude_scale[0] > amplitude_scale[1] || offset_deg[0] > offset_deg[1])
      throw std::invalid_argument("generator config: inverted range");
    for (auto t : kAllTerrains) profile(t);
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GeneratorConfig, version, strides_per_recording, stride_min, stride_max,
                                                min_dwell, switch_probability, noise_sigma, amplitude_scale,
                                                offset_deg, imu_radius_m, gravity, roll, yaw, terrains)

inline GeneratorConfig load_generator_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open generator config " + path);
  GeneratorConfig cfg = nlohmann::json::parse(in).get<GeneratorConfig>();
  cfg.validate();
  return cfg;
}

struct SubjectTraits {
  double amplitude_scale = 1.0;
  double offset_deg = 0.0;
};

namespace detail {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Angle and its first two phase derivatives (degrees per cycle^k), with the
// template blend weight `w` rising from 0 to 1 across a transition stride.
struct AngleSample {
  double value, d1, d2;
};

inline AngleSample blended(const FourierCurve& from, const FourierCurve& to, double phase, double w, double scale,
                           double offset) {
  if (&from == &to || w >= 1.0)
    return {offset + to.value(phase, scale), to.d1(phase, scale), to.d2(phase, scale)};
  const double a = from.value(phase, scale), b = to.value(phase, scale);
  const double a1 = from.d1(phase, scale), b1 = to.d1(phase, scale);
  const double a2 = from.d2(phase, scale), b2 = to.d2(phase, scale);
  return {offset + (1.0 - w) * a + w * b, (b - a) + (1.0 - w) * a1 + w * b1, 2.0 * (b1 - a1) + (1.0 - w) * a2 + w * b2};
}

}  // namespace detail

inline Recording synthesize_recording(const GeneratorConfig& cfg, int subject_id, std::uint64_t seed) {
  cfg.validate();
  const RngStream subject_rng = RngStream(seed).fork(static_cast<std::uint64_t>(subject_id));
  RngStream trait_rng = subject_rng.fork(1);
  RngStream walk_rng = subject_rng.fork(2);
  RngStream noise_rng = subject_rng.fork(3);

  SubjectTraits traits;
  traits.amplitude_scale = trait_rng.uniform(cfg.amplitude_scale[0], cfg.amplitude_scale[1]);
  traits.offset_deg = trait_rng.uniform(cfg.offset_deg[0], cfg.offset_deg[1]);

  // Terrain walk over strides; a switch needs min_dwell strides behind it
  // and enough strides left to complete another dwell.
  const std::size_t n_strides = cfg.strides_per_recording;
  std::vector<Terrain> stride_terrain(n_strides);
  std::vector<std::size_t> stride_len(n_strides);
  Terrain current = kAllTerrains[walk_rng.uniform_int(kTerrainCount)];
  std::size_t dwell = 0;
  for (std::size_t s = 0; s < n_strides; ++s) {
    const bool can_switch = dwell >= cfg.min_dwell && n_strides - s >= cfg.min_dwell;
    if (can_switch && walk_rng.uniform() < cfg.switch_probability) {
      const auto pick = walk_rng.uniform_int(kTerrainCount - 1);
      current = kAllTerrains[(static_cast<std::size_t>(current) + 1 + pick) % kTerrainCount];
      dwell = 0;
    }
    ++dwell;
    stride_terrain[s] = current;
    stride_len[s] = cfg.stride_min + walk_rng.uniform_int(cfg.stride_max - cfg.stride_min + 1);
  }

  Recording rec;
  rec.subject_id = subject_id;
  std::size_t total = 0;
  for (std::size_t s = 0; s < n_strides; ++s) {
    rec.stride_starts.push_back(total);
    total += stride_len[s];
  }
  rec.channels = Tensor<double>({kImuChannels, total});
  rec.terrain.resize(total);
  rec.phase_truth = phase_from_strides(rec.stride_starts, total);

  const double g = cfg.gravity, r = cfg.imu_radius_m;
  auto put = [&](Segment seg, Axis axis, std::size_t n, double v) {
    rec.channels[channel_index(seg, axis) * total + n] = v;
  };

  for (std::size_t s = 0; s < n_strides; ++s) {
    const Terrain here = stride_terrain[s];
    const Terrain before = s > 0 ? stride_terrain[s - 1] : here;
    const TerrainProfile& to = cfg.profile(here);
    const TerrainProfile& from = cfg.profile(before);
    const double cycles_per_sec = cfg.stride_min > 0 ? kSampleRate / static_cast<double>(stride_len[s]) : 0.0;
    for (std::size_t j = 0; j < stride_len[s]; ++j) {
      const std::size_t n = rec.stride_starts[s] + j;
      const double phase = rec.phase_truth[n].phase;
      const double w = before == here ? 1.0 : phase;
      rec.terrain[n] = here;

      const double roll = detail::deg2rad(cfg.roll.value(phase));
      const double roll_dot = detail::deg2rad(cfg.roll.d1(phase)) * cycles_per_sec;
      const double roll_dd = detail::deg2rad(cfg.roll.d2(phase)) * cycles_per_sec * cycles_per_sec;
      const double yaw_dot = detail::deg2rad(cfg.yaw.d1(phase)) * cycles_per_sec;

      auto emit = [&](Segment seg, const detail::AngleSample& a, double roll_sign) {
        const double th = detail::deg2rad(a.value);
        const double th_dot = detail::deg2rad(a.d1) * cycles_per_sec;
        const double th_dd = detail::deg2rad(a.d2) * cycles_per_sec * cycles_per_sec;
        const double rl = roll_sign * roll;
        put(seg, Axis::AccX, n, g * std::sin(th) + r * th_dd);
        put(seg, Axis::AccY, n, g * std::sin(rl) + r * roll_sign * roll_dd);
        put(seg, Axis::AccZ, n, g * std::cos(th) * std::cos(rl) + r * th_dot * th_dot);
        put(seg, Axis::GyrX, n, roll_sign * roll_dot);
        put(seg, Axis::GyrY, n, th_dot);
        put(seg, Axis::GyrZ, n, roll_sign * yaw_dot);
        put(seg, Axis::Pitch, n, th);
      };

      const double scale = traits.amplitude_scale, off = traits.offset_deg;
      emit(Segment::LeftThigh, detail::blended(from.thigh, to.thigh, phase, w, scale, off), 1.0);
      emit(Segment::RightThigh, detail::blended(from.thigh, to.thigh, wrap_phase(phase + 0.5), w, scale, off), -1.0);
      emit(Segment::Pelvis, detail::blended(from.pelvis, to.pelvis, phase, w, scale, off), 0.5);
    }
  }

  if (cfg.noise_sigma > 0.0)
    for (auto& v : rec.channels.data()) v += noise_rng.normal(0.0, cfg.noise_sigma);
  validate(rec);
  return rec;
}

}  // namespace gaitphase
