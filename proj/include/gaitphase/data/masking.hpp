#pragma once

// Channel masks for reconstruction pre-training, plus the 2-D
// (channel x time-block) variant.

#include "gaitphase/numerics/rng.hpp"
#include "gaitphase/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

namespace gaitphase {

struct MaskBlock {
  std::size_t channel = 0;
  std::size_t block = 0;  // time block index, covering [block*len, (block+1)*len)

  friend bool operator==(const MaskBlock&, const MaskBlock&) = default;
};

struct MaskSpec {
  std::vector<std::size_t> channels;  // sorted, channel-wise mask
  std::vector<MaskBlock> blocks;      // 2-D mask only
  std::size_t block_len = 0;

  bool is_2d() const { return block_len > 0; }

  // True when element (c, t) is hidden.
  bool masked(std::size_t c, std::size_t t) const {
    if (is_2d()) return std::find(blocks.begin(), blocks.end(), MaskBlock{c, t / block_len}) != blocks.end();
    return std::binary_search(channels.begin(), channels.end(), c);
  }
};

inline void check_mask_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("mask ratio must lie in (0, 1)");
}

// round(n * ratio), at least 1.
inline std::size_t mask_count(std::size_t n, double ratio) {
  check_mask_ratio(ratio);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio)));
}

// k distinct indices from [0, n), uniform without replacement, sorted.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.uniform_int(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline MaskSpec draw_channel_mask(std::size_t channels, double ratio, RngStream& rng) {
  MaskSpec m;
  m.channels = sample_without_replacement(channels, mask_count(channels, ratio), rng);
  return m;
}

inline MaskSpec draw_2d_mask(std::size_t channels, std::size_t length, double ratio, std::size_t block_len,
                             RngStream& rng) {
  if (block_len == 0 || length % block_len != 0)
    throw std::invalid_argument("2-D mask: block_len must divide the window length");
  const std::size_t per_channel = length / block_len;
  MaskSpec m;
  m.block_len = block_len;
  for (auto b : sample_without_replacement(channels * per_channel, mask_count(channels * per_channel, ratio), rng))
    m.blocks.push_back({b / per_channel, b % per_channel});
  return m;
}

// Zeroes the masked elements of a [C, L] slice in place.
template <typename T>
void zero_masked(T* x, std::size_t length, const MaskSpec& m) {
  if (m.is_2d()) {
    for (const auto& b : m.blocks) std::fill_n(x + b.channel * length + b.block * m.block_len, m.block_len, T{0});
  } else {
    for (auto c : m.channels) std::fill_n(x + c * length, length, T{0});
  }
}

template <typename T>
std::pair<Tensor<T>, MaskSpec> apply_channel_mask(const Tensor<T>& x, double ratio, RngStream& rng) {
  if (x.rank() != 2) throw std::invalid_argument("apply_channel_mask: expected [C, L]");
  auto spec = draw_channel_mask(x.dim(0), ratio, rng);
  Tensor<T> out = x;
  zero_masked(out.ptr(), x.dim(1), spec);
  return {std::move(out), std::move(spec)};
}

template <typename T>
std::pair<Tensor<T>, MaskSpec> apply_2d_mask(const Tensor<T>& x, double ratio, std::size_t block_len, RngStream& rng) {
  if (x.rank() != 2) throw std::invalid_argument("apply_2d_mask: expected [C, L]");
  auto spec = draw_2d_mask(x.dim(0), x.dim(1), ratio, block_len, rng);
  Tensor<T> out = x;
  zero_masked(out.ptr(), x.dim(1), spec);
  return {std::move(out), std::move(spec)};
}

// Independent mask per sample of a [B, C, L] batch.
template <typename T>
std::pair<Tensor<T>, std::vector<MaskSpec>> mask_batch(const Tensor<T>& x, double ratio, std::size_t block_len,
                                                       RngStream& rng) {
  if (x.rank() != 3) throw std::invalid_argument("mask_batch: expected [B, C, L]");
  const std::size_t c = x.dim(1), len = x.dim(2);
  Tensor<T> out = x;
  std::vector<MaskSpec> specs;
  specs.reserve(x.dim(0));
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    specs.push_back(block_len ? draw_2d_mask(c, len, ratio, block_len, rng) : draw_channel_mask(c, ratio, rng));
    zero_masked(out.ptr() + b * c * len, len, specs.back());
  }
  return {std::move(out), std::move(specs)};
}

}  // namespace gaitphase
