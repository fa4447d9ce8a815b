#pragma once

// Channel-wise embeddings: every channel's series is mapped to one token by
// the same (shared) weights. Input [B, C, L], output [B, C, emb_dim].

#include "gaitphase/model/config.hpp"
#include "gaitphase/numerics/layers.hpp"

#include <variant>

namespace gaitphase {

namespace detail {

inline constexpr std::uint8_t kPoolDead = 2;

// Pairwise max over the trailing axis, then relu (equal to relu then pool).
// An odd trailing sample is dropped. choice[i] is the offset of the winner
// inside its pair, or kPoolDead when the relu zeroed the output.
template <typename T>
void pool2_relu(const T* x, std::size_t rows, std::size_t len, T* y, std::uint8_t* choice) {
  const std::size_t half = len / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x + r * len;
    for (std::size_t t = 0; t < half; ++t) {
      const T a = src[2 * t], b = src[2 * t + 1];
      const std::uint8_t pick = b > a ? 1 : 0;
      const T m = pick ? b : a;
      const bool live = m > T{0};
      y[r * half + t] = live ? m : T{0};
      choice[r * half + t] = live ? pick : kPoolDead;
    }
  }
}

template <typename T>
void pool2_relu_backward(const T* dy, const std::uint8_t* choice, std::size_t rows, std::size_t len, T* dx) {
  const std::size_t half = len / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    T* out = dx + r * len;
    for (std::size_t t = 0; t < half; ++t) {
      const std::size_t i = r * half + t;
      out[2 * t] = choice[i] == 0 ? dy[i] : T{0};
      out[2 * t + 1] = choice[i] == 1 ? dy[i] : T{0};
    }
    if (len % 2) out[len - 1] = T{0};
  }
}

}  // namespace detail

// conv(1->c1,k3) relu pool2 conv(c1->c2,k3) relu pool2 flatten linear.
// The convolutional stage runs over chunks of channel series so that its
// intermediates stay cache-resident; only the pooled activations and the
// pool choices are kept for the backward pass.
template <typename T>
class TcnEmbedding {
 public:
  static constexpr std::size_t kChunk = 32;

  explicit TcnEmbedding(const TctstConfig& cfg, const std::string& name = "embed")
      : conv1_(name + ".conv1", 1, cfg.tcn_channels1, 3, 1),
        conv2_(name + ".conv2", cfg.tcn_channels1, cfg.tcn_channels2, 3, 1),
        proj_(name + ".proj", cfg.tcn_channels2 * (cfg.lookback / 4), cfg.emb_dim),
        lookback_(cfg.lookback),
        emb_(cfg.emb_dim),
        c1_(cfg.tcn_channels1),
        c2_(cfg.tcn_channels2) {
    if (cfg.lookback < 4) throw std::invalid_argument("tcn_embed: lookback must be >= 4");
  }

  void init(RngStream& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    proj_.init(rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    const auto [b, c] = check(x);
    Tensor<T> p1, p2;
    std::vector<std::uint8_t> ch1, ch2;
    conv_stage(x, b * c, p1, ch1, p2, ch2);
    return proj_.infer(p2).reshaped({b, c, emb_});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const auto [b, c] = check(x);
    batch_ = b;
    channels_ = c;
    input_ = x;
    Tensor<T> p2;
    conv_stage(x, b * c, pooled1_, choice1_, p2, choice2_);
    return proj_.forward(p2).reshaped({b, c, emb_});
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t seqs = batch_ * channels_;
    const std::size_t l1 = lookback_, l2 = lookback_ / 2, l3 = l2 / 2;
    const Tensor<T> dp2 = proj_.backward(dy.reshaped({seqs, emb_}));
    Tensor<T> dx({batch_, channels_, lookback_});
    for (std::size_t s0 = 0; s0 < seqs; s0 += kChunk) {
      const std::size_t n = std::min(kChunk, seqs - s0);
      Tensor<T> da2({n, c2_, l2});
      detail::pool2_relu_backward(dp2.ptr() + s0 * c2_ * l3, choice2_.data() + s0 * c2_ * l3, n * c2_, l2, da2.ptr());
      const Tensor<T> p1 = slice(pooled1_, s0, n, c1_ * l2, {n, c1_, l2});
      const Tensor<T> dp1 = ops::conv1d_backward(p1, conv2_.weight().value, da2, conv2_.padding(), conv2_.stride(),
                                                 conv2_.weight().grad, &conv2_.bias().grad);
      Tensor<T> da1({n, c1_, l1});
      detail::pool2_relu_backward(dp1.ptr(), choice1_.data() + s0 * c1_ * l2, n * c1_, l1, da1.ptr());
      const Tensor<T> xin = slice(input_, s0, n, l1, {n, 1, l1});
      const Tensor<T> dxin = ops::conv1d_backward(xin, conv1_.weight().value, da1, conv1_.padding(), conv1_.stride(),
                                                  conv1_.weight().grad, &conv1_.bias().grad);
      std::copy(dxin.ptr(), dxin.ptr() + n * l1, dx.ptr() + s0 * l1);
    }
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    conv1_.visit(f);
    conv2_.visit(f);
    proj_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    conv1_.visit(f);
    conv2_.visit(f);
    proj_.visit(f);
  }

 private:
  std::pair<std::size_t, std::size_t> check(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != lookback_)
      throw std::invalid_argument("tcn_embed: expected [B, C, " + std::to_string(lookback_) + "], got " +
                                  shape_str(x.shape()));
    return {x.dim(0), x.dim(1)};
  }

  static Tensor<T> slice(const Tensor<T>& src, std::size_t first, std::size_t n, std::size_t row, Shape shape) {
    Tensor<T> out(std::move(shape));
    std::copy(src.ptr() + first * row, src.ptr() + (first + n) * row, out.ptr());
    return out;
  }

  // x viewed as `seqs` series -> p1 [seqs, c1, L/2], p2 [seqs, c2 * L/4].
  void conv_stage(const Tensor<T>& x, std::size_t seqs, Tensor<T>& p1, std::vector<std::uint8_t>& ch1,
                  Tensor<T>& p2, std::vector<std::uint8_t>& ch2) const {
    const std::size_t l1 = lookback_, l2 = lookback_ / 2, l3 = l2 / 2;
    p1 = Tensor<T>({seqs, c1_, l2});
    p2 = Tensor<T>({seqs, c2_ * l3});
    ch1.resize(seqs * c1_ * l2);
    ch2.resize(seqs * c2_ * l3);
    for (std::size_t s0 = 0; s0 < seqs; s0 += kChunk) {
      const std::size_t n = std::min(kChunk, seqs - s0);
      const Tensor<T> a1 = conv1_.infer(slice(x, s0, n, l1, {n, 1, l1}));
      detail::pool2_relu(a1.ptr(), n * c1_, l1, p1.ptr() + s0 * c1_ * l2, ch1.data() + s0 * c1_ * l2);
      const Tensor<T> a2 = conv2_.infer(slice(p1, s0, n, c1_ * l2, {n, c1_, l2}));
      detail::pool2_relu(a2.ptr(), n * c2_, l2, p2.ptr() + s0 * c2_ * l3, ch2.data() + s0 * c2_ * l3);
    }
  }

  Conv1d<T> conv1_, conv2_;
  Linear<T> proj_;
  std::size_t lookback_, emb_, c1_, c2_;
  std::size_t batch_ = 0, channels_ = 0;
  Tensor<T> input_, pooled1_;
  std::vector<std::uint8_t> choice1_, choice2_;
};

// linear(L -> hidden) relu linear(hidden -> emb)
template <typename T>
class MlpEmbedding {
 public:
  explicit MlpEmbedding(const TctstConfig& cfg, const std::string& name = "embed")
      : fc1_(name + ".fc1", cfg.lookback, cfg.mlp_hidden),
        fc2_(name + ".fc2", cfg.mlp_hidden, cfg.emb_dim),
        lookback_(cfg.lookback),
        emb_(cfg.emb_dim) {}

  void init(RngStream& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  std::size_t hidden_width() const { return fc1_.out_features(); }

  Tensor<T> infer(const Tensor<T>& x) const {
    check(x);
    return fc2_.infer(ops::relu(fc1_.infer(x)));
  }
  Tensor<T> forward(const Tensor<T>& x) {
    check(x);
    hidden_ = fc1_.forward(x);
    return fc2_.forward(ops::relu(hidden_));
  }
  Tensor<T> backward(const Tensor<T>& dy) { return fc1_.backward(ops::relu_backward(hidden_, fc2_.backward(dy))); }

  template <typename F>
  void visit(F&& f) {
    fc1_.visit(f);
    fc2_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    fc1_.visit(f);
    fc2_.visit(f);
  }

 private:
  void check(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != lookback_)
      throw std::invalid_argument("mlp_embed: expected [B, C, " + std::to_string(lookback_) + "], got " +
                                  shape_str(x.shape()));
  }

  Linear<T> fc1_, fc2_;
  std::size_t lookback_, emb_;
  Tensor<T> hidden_;
};

// Non-overlapping patches, each linear(patch_len -> patch_dim); concatenated,
// relu, linear(n_patches * patch_dim -> emb).
template <typename T>
class PatchEmbedding {
 public:
  explicit PatchEmbedding(const TctstConfig& cfg, const std::string& name = "embed")
      : patch_(name + ".patch", cfg.patch_len, cfg.patch_dim),
        proj_(name + ".proj", (cfg.lookback / cfg.patch_len) * cfg.patch_dim, cfg.emb_dim),
        lookback_(cfg.lookback),
        patch_len_(cfg.patch_len),
        emb_(cfg.emb_dim) {
    if (cfg.patch_len == 0 || cfg.lookback % cfg.patch_len != 0)
      throw std::invalid_argument("patch_embed: lookback must be divisible by the patch length");
  }

  void init(RngStream& rng) {
    patch_.init(rng);
    proj_.init(rng);
  }

  std::size_t n_patches() const { return lookback_ / patch_len_; }
  std::size_t intermediate_width() const { return proj_.in_features(); }

  Tensor<T> infer(const Tensor<T>& x) const {
    const auto [b, c] = check(x);
    Tensor<T> h = patch_.infer(x.reshaped({b * c * n_patches(), patch_len_}));
    h.reshape({b, c, intermediate_width()});
    return proj_.infer(ops::relu(h));
  }
  Tensor<T> forward(const Tensor<T>& x) {
    const auto [b, c] = check(x);
    batch_ = b;
    channels_ = c;
    concat_ = patch_.forward(x.reshaped({b * c * n_patches(), patch_len_}));
    concat_.reshape({b, c, intermediate_width()});
    return proj_.forward(ops::relu(concat_));
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = ops::relu_backward(concat_, proj_.backward(dy));
    d.reshape({batch_ * channels_ * n_patches(), patch_.out_features()});
    return patch_.backward(d).reshaped({batch_, channels_, lookback_});
  }

  template <typename F>
  void visit(F&& f) {
    patch_.visit(f);
    proj_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    patch_.visit(f);
    proj_.visit(f);
  }

 private:
  std::pair<std::size_t, std::size_t> check(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != lookback_)
      throw std::invalid_argument("patch_embed: expected [B, C, " + std::to_string(lookback_) + "], got " +
                                  shape_str(x.shape()));
    return {x.dim(0), x.dim(1)};
  }

  Linear<T> patch_, proj_;
  std::size_t lookback_, patch_len_, emb_;
  std::size_t batch_ = 0, channels_ = 0;
  Tensor<T> concat_;
};

template <typename T>
class ChannelEmbedding {
 public:
  explicit ChannelEmbedding(const TctstConfig& cfg) : impl_(make(cfg)) {}

  void init(RngStream& rng) {
    std::visit([&](auto& e) { e.init(rng); }, impl_);
  }
  Tensor<T> infer(const Tensor<T>& x) const {
    return std::visit([&](const auto& e) { return e.infer(x); }, impl_);
  }
  Tensor<T> forward(const Tensor<T>& x) {
    return std::visit([&](auto& e) { return e.forward(x); }, impl_);
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    return std::visit([&](auto& e) { return e.backward(dy); }, impl_);
  }
  template <typename F>
  void visit(F&& f) {
    std::visit([&](auto& e) { e.visit(f); }, impl_);
  }
  template <typename F>
  void visit(F&& f) const {
    std::visit([&](const auto& e) { e.visit(f); }, impl_);
  }

 private:
  using Impl = std::variant<TcnEmbedding<T>, MlpEmbedding<T>, PatchEmbedding<T>>;
  static Impl make(const TctstConfig& cfg) {
    switch (cfg.embedding) {
      case EmbeddingKind::Mlp: return MlpEmbedding<T>(cfg);
      case EmbeddingKind::Patch: return PatchEmbedding<T>(cfg);
      case EmbeddingKind::Tcn: break;
    }
    return TcnEmbedding<T>(cfg);
  }

  Impl impl_;
};

}  // namespace gaitphase
