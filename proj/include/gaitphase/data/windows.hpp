#pragma once

// Normalization statistics, sliding windows and terrain tagging.
//
// Windows are stored as (recording, end sample) references and only
// materialized into tensors batch by batch; a full L_B=200 dataset would
// otherwise not fit in memory.

#include "gaitphase/data/recording.hpp"

#include "json.hpp"

namespace gaitphase {

inline constexpr double kNormStdFloor = 1e-8;

struct NormStats {
  std::vector<double> mean = std::vector<double>(kImuChannels, 0.0);
  std::vector<double> std = std::vector<double>(kImuChannels, 1.0);

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NormStats, mean, std)

// Pooled per-channel z-score statistics (population std) over every sample of
// the training recordings.
inline NormStats fit_norm_stats(const std::vector<const Recording*>& train) {
  if (train.empty()) throw std::invalid_argument("fit_norm_stats: no training recordings");
  NormStats s;
  std::size_t count = 0;
  for (const auto* r : train) count += r->length();
  if (count == 0) throw std::invalid_argument("fit_norm_stats: training recordings are empty");
  for (std::size_t c = 0; c < kImuChannels; ++c) {
    double sum = 0.0;
    for (const auto* r : train)
      for (std::size_t n = 0; n < r->length(); ++n) sum += r->value(c, n);
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const auto* r : train)
      for (std::size_t n = 0; n < r->length(); ++n) {
        const double d = r->value(c, n) - mean;
        sq += d * d;
      }
    s.mean[c] = mean;
    s.std[c] = std::max(std::sqrt(sq / static_cast<double>(count)), kNormStdFloor);
  }
  return s;
}

inline NormStats fit_norm_stats(const std::vector<Recording>& train) {
  std::vector<const Recording*> ptrs;
  for (const auto& r : train) ptrs.push_back(&r);
  return fit_norm_stats(ptrs);
}

// Normalizes the IMU rows of x ([C, L] or [B, C, L]); rows >= 21 are phase
// channels and are left alone.
template <typename T>
void apply_norm(Tensor<T>& x, const NormStats& stats) {
  if (x.rank() != 2 && x.rank() != 3) throw std::invalid_argument("apply_norm: expected [C, L] or [B, C, L]");
  const std::size_t c_dim = x.dim(x.rank() - 2), len = x.dim(x.rank() - 1);
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t imu = std::min(c_dim, kImuChannels);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < imu; ++c) {
      T* row = x.ptr() + (b * c_dim + c) * len;
      const double m = stats.mean[c], inv = 1.0 / std::max(stats.std[c], kNormStdFloor);
      for (std::size_t n = 0; n < len; ++n) row[n] = static_cast<T>((row[n] - m) * inv);
    }
}

struct Window {
  Tensor<double> x;  // [C, L_B]
  PhaseVector target;
  int subject_id = 0;
  std::string terrain_tag;
};

// Lightweight sliding-window view over one recording.
struct WindowSet {
  const Recording* rec = nullptr;
  std::size_t lookback = 0;
  std::size_t stride = 1;
  bool phase_channels = false;
  std::size_t count = 0;

  std::size_t end(std::size_t i) const { return i * stride + lookback - 1; }
  std::size_t start(std::size_t i) const { return i * stride; }
  PhaseVector target(std::size_t i) const { return encode_polar(rec->phase_truth[end(i)]); }

  // Writes window i into dst[C * L_B], normalizing IMU rows when stats given.
  template <typename T>
  void fill(T* dst, std::size_t i, const NormStats* stats = nullptr) const {
    const std::size_t s = start(i), total = rec->length();
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      const double* src = rec->channels.ptr() + c * total + s;
      T* row = dst + c * lookback;
      if (stats) {
        const double m = stats->mean[c], inv = 1.0 / std::max(stats->std[c], kNormStdFloor);
        for (std::size_t n = 0; n < lookback; ++n) row[n] = static_cast<T>((src[n] - m) * inv);
      } else {
        for (std::size_t n = 0; n < lookback; ++n) row[n] = static_cast<T>(src[n]);
      }
    }
    for (std::size_t n = 0; n < lookback; ++n) {
      const PhaseVector g = phase_channels ? encode_polar(rec->phase_truth[s + n]) : PhaseVector{{0.0, 0.0, 0.0}};
      for (std::size_t k = 0; k < kPhaseChannels; ++k) dst[(kImuChannels + k) * lookback + n] = static_cast<T>(g[k]);
    }
  }

  Window at(std::size_t i, const NormStats* stats = nullptr) const {
    if (i >= count) throw std::out_of_range("window index out of range");
    Window w;
    w.x = Tensor<double>({kModelChannels, lookback});
    fill(w.x.ptr(), i, stats);
    w.target = target(i);
    w.subject_id = rec->subject_id;
    return w;
  }
};

inline std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("window stride must be >= 1");
  if (lookback < 1) throw std::invalid_argument("lookback must be >= 1");
  if (length < lookback)
    throw std::invalid_argument("recording of " + std::to_string(length) + " samples is shorter than lookback " +
                                std::to_string(lookback));
  return (length - lookback) / stride + 1;
}

inline WindowSet window_set(const Recording& rec, std::size_t lookback, std::size_t stride, bool include_phase_channels) {
  WindowSet w;
  w.rec = &rec;
  w.lookback = lookback;
  w.stride = stride;
  w.phase_channels = include_phase_channels;
  w.count = window_count(rec.length(), lookback, stride);
  return w;
}

inline std::vector<std::string> segment_stable_vs_transition(const Recording& rec, const WindowSet& windows);

// Materialized windows; use WindowSet directly for anything large.
inline std::vector<Window> build_windows(const Recording& rec, std::size_t lookback, std::size_t stride,
                                         bool include_phase_channels) {
  const auto set = window_set(rec, lookback, stride, include_phase_channels);
  const auto tags = segment_stable_vs_transition(rec, set);
  std::vector<Window> out;
  out.reserve(set.count);
  for (std::size_t i = 0; i < set.count; ++i) {
    out.push_back(set.at(i));
    out.back().terrain_tag = tags[i];
  }
  return out;
}

// A window is a transition when its labels are mixed or its last sample is
// within one stride (the stride containing it) of a label change. Tags are
// "stable:<T>" or "transition:<A>-><B>", naming the nearest change.
inline std::vector<std::string> segment_stable_vs_transition(const Recording& rec, const WindowSet& windows) {
  std::vector<std::size_t> changes;  // sample where a new label starts
  for (std::size_t n = 1; n < rec.length(); ++n)
    if (rec.terrain[n] != rec.terrain[n - 1]) changes.push_back(n);

  std::vector<std::string> tags;
  tags.reserve(windows.count);
  for (std::size_t i = 0; i < windows.count; ++i) {
    const std::size_t first = windows.start(i), last = windows.end(i);
    const std::size_t stride_idx = rec.stride_of(last);
    const std::size_t reach = rec.stride_end(stride_idx) - rec.stride_starts[stride_idx];

    const std::size_t* nearest = nullptr;
    std::size_t best = SIZE_MAX;
    for (const auto& c : changes) {
      const bool inside = c > first && c <= last;
      const std::size_t dist = c > last ? c - last : last - c;
      if (inside || dist <= reach) {
        // Prefer a change inside the window, then the closest one.
        const std::size_t key = inside ? dist : reach + 1 + dist;
        if (key < best) {
          best = key;
          nearest = &c;
        }
      }
    }
    if (nearest) {
      tags.push_back("transition:" + std::string(terrain_name(rec.terrain[*nearest - 1])) + "->" +
                     std::string(terrain_name(rec.terrain[*nearest])));
    } else {
      tags.push_back("stable:" + std::string(terrain_name(rec.terrain[last])));
    }
  }
  return tags;
}

inline bool is_transition_tag(std::string_view tag) { return tag.starts_with("transition:"); }

// Windows from several recordings, addressed by a flat index.
struct WindowDataset {
  std::vector<WindowSet> sets;
  std::vector<std::vector<std::string>> tags;
  std::vector<std::size_t> offsets;  // prefix sums of set counts
  NormStats stats;
  bool normalize = true;

  std::size_t size() const { return offsets.empty() ? 0 : offsets.back(); }
  std::size_t lookback() const { return sets.empty() ? 0 : sets.front().lookback; }

  std::pair<std::size_t, std::size_t> locate(std::size_t i) const {
    auto it = std::upper_bound(offsets.begin(), offsets.end(), i);
    const std::size_t set = static_cast<std::size_t>(it - offsets.begin()) - 1;
    return {set, i - offsets[set]};
  }

  int subject(std::size_t i) const { return sets[locate(i).first].rec->subject_id; }
  const std::string& tag(std::size_t i) const {
    auto [s, k] = locate(i);
    return tags[s][k];
  }
  PhaseVector target(std::size_t i) const {
    auto [s, k] = locate(i);
    return sets[s].target(k);
  }

  // x: [B, 24, L_B], targets: [B, 3].
  template <typename T>
  std::pair<Tensor<T>, Tensor<T>> batch(std::span<const std::size_t> indices) const {
    const std::size_t len = lookback();
    Tensor<T> x({indices.size(), kModelChannels, len});
    Tensor<T> y({indices.size(), kPhaseChannels});
    for (std::size_t b = 0; b < indices.size(); ++b) {
      auto [s, k] = locate(indices[b]);
      sets[s].fill(x.ptr() + b * kModelChannels * len, k, normalize ? &stats : nullptr);
      const auto g = sets[s].target(k);
      for (std::size_t j = 0; j < kPhaseChannels; ++j) y.at(b, j) = static_cast<T>(g[j]);
    }
    return {std::move(x), std::move(y)};
  }
};

inline WindowDataset make_dataset(const std::vector<const Recording*>& recs, std::size_t lookback, std::size_t stride,
                                  bool include_phase_channels, const NormStats& stats, bool normalize = true) {
  WindowDataset d;
  d.stats = stats;
  d.normalize = normalize;
  d.offsets.push_back(0);
  for (const auto* r : recs) {
    if (r->length() < lookback) continue;
    d.sets.push_back(window_set(*r, lookback, stride, include_phase_channels));
    d.tags.push_back(segment_stable_vs_transition(*r, d.sets.back()));
    d.offsets.push_back(d.offsets.back() + d.sets.back().count);
  }
  return d;
}

}  // namespace gaitphase
