#pragma once

// Parameterized layers over the op catalog. Each layer offers
//   infer(x) const        -- no caching, safe for concurrent use
//   forward(x)            -- caches what backward needs
//   backward(dy) -> dx    -- accumulates parameter gradients
// and visit(f) over its parameters in a fixed order.

#include "gaitphase/numerics/ops.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace gaitphase {

template <typename T>
void init_uniform(Tensor<T>& t, std::size_t fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool bias = true)
      : weight_(name + ".weight", {out, in}) {
    if (bias) bias_.emplace(name + ".bias", Shape{out});
  }

  void init(RngStream& rng) {
    init_uniform(weight_.value, in_features(), rng);
    if (bias_) init_uniform(bias_->value, in_features(), rng);
  }

  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }

  Tensor<T> infer(const Tensor<T>& x) const { return ops::linear(x, weight_.value, bias_value()); }
  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return infer(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    return ops::linear_backward(input_, weight_.value, dy, weight_.grad, bias_ ? &bias_->grad : nullptr);
  }

  template <typename F>
  void visit(F&& f) {
    f(weight_);
    if (bias_) f(*bias_);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight_);
    if (bias_) f(*bias_);
  }

  Parameter<T>& weight() { return weight_; }
  std::optional<Parameter<T>>& bias() { return bias_; }

 private:
  const Tensor<T>& bias_value() const {
    static const Tensor<T> none;
    return bias_ ? bias_->value : none;
  }

  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t kernel, int padding,
         int stride = 1)
      : weight_(name + ".weight", {c_out, c_in, kernel}), bias_(name + ".bias", {c_out}), padding_(padding),
        stride_(stride) {}

  void init(RngStream& rng) {
    const std::size_t fan_in = weight_.value.dim(1) * weight_.value.dim(2);
    init_uniform(weight_.value, fan_in, rng);
    init_uniform(bias_.value, fan_in, rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const { return ops::conv1d(x, weight_.value, bias_.value, padding_, stride_); }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  const Parameter<T>& weight() const { return weight_; }
  const Parameter<T>& bias() const { return bias_; }
  int padding() const { return padding_; }
  int stride() const { return stride_; }
  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return infer(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    return ops::conv1d_backward(input_, weight_.value, dy, padding_, stride_, weight_.grad, &bias_.grad);
  }

  template <typename F>
  void visit(F&& f) {
    f(weight_);
    f(bias_);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight_);
    f(bias_);
  }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  int padding_ = 0;
  int stride_ = 1;
  Tensor<T> input_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t d) : gamma_(name + ".gamma", {d}), beta_(name + ".beta", {d}) {}

  void init(RngStream&) {
    gamma_.value.fill(T{1});
    beta_.value.zero();
  }

  Tensor<T> infer(const Tensor<T>& x) const { return ops::layer_norm(x, gamma_.value, beta_.value); }
  Tensor<T> forward(const Tensor<T>& x) { return ops::layer_norm(x, gamma_.value, beta_.value, T(1e-5), &cache_); }
  Tensor<T> backward(const Tensor<T>& dy) {
    return ops::layer_norm_backward(cache_, gamma_.value, dy, gamma_.grad, beta_.grad);
  }

  template <typename F>
  void visit(F&& f) {
    f(gamma_);
    f(beta_);
  }
  template <typename F>
  void visit(F&& f) const {
    f(gamma_);
    f(beta_);
  }

 private:
  Parameter<T> gamma_;
  Parameter<T> beta_;
  ops::LayerNormCache<T> cache_;
};

// Scaled dot-product self-attention over groups of tokens. Input [T, d] or
// [B, T, d]; attention runs within each of the B groups, no causal mask.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t n_head, bool qkv_bias = true)
      : wq_(name + ".wq", d_model, d_model, qkv_bias),
        wk_(name + ".wk", d_model, d_model, qkv_bias),
        wv_(name + ".wv", d_model, d_model, qkv_bias),
        wo_(name + ".wo", d_model, d_model, true),
        d_model_(d_model),
        n_head_(n_head) {
    if (n_head == 0 || d_model % n_head != 0)
      throw std::invalid_argument("multi_head_attention: d_model " + std::to_string(d_model) +
                                  " not divisible by n_head " + std::to_string(n_head));
  }

  void init(RngStream& rng) {
    wq_.init(rng);
    wk_.init(rng);
    wv_.init(rng);
    wo_.init(rng);
  }

  std::size_t n_head() const { return n_head_; }

  Tensor<T> infer(const Tensor<T>& x) const {
    Cache c;
    bind(x, c);
    c.q = wq_.infer(x);
    c.k = wk_.infer(x);
    c.v = wv_.infer(x);
    return wo_.infer(attend(x.shape(), c));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    bind(x, cache_);
    cache_.q = wq_.forward(x);
    cache_.k = wk_.forward(x);
    cache_.v = wv_.forward(x);
    return wo_.forward(attend(x.shape(), cache_));
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const auto& c = cache_;
    const std::size_t rows = c.groups * c.tokens;
    const std::size_t dh = d_model_ / n_head_;
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    Tensor<T> dconcat = wo_.backward(dy);
    Tensor<T> dq({rows, d_model_}), dk({rows, d_model_}), dv({rows, d_model_});
    auto Q = as_matrix(c.q, rows, d_model_);
    auto K = as_matrix(c.k, rows, d_model_);
    auto V = as_matrix(c.v, rows, d_model_);
    auto DO = as_matrix(dconcat, rows, d_model_);
    auto DQ = as_matrix(dq, rows, d_model_);
    auto DK = as_matrix(dk, rows, d_model_);
    auto DV = as_matrix(dv, rows, d_model_);
    const auto tk = static_cast<Eigen::Index>(c.tokens);
    const auto dhi = static_cast<Eigen::Index>(dh);
    MatrixRM<T> dp(tk, tk), ds(tk, tk);
    for (std::size_t b = 0; b < c.groups; ++b)
      for (std::size_t h = 0; h < n_head_; ++h) {
        const auto r0 = static_cast<Eigen::Index>(b * c.tokens);
        const auto c0 = static_cast<Eigen::Index>(h * dh);
        ConstMatMap<T> P(c.probs.ptr() + (b * n_head_ + h) * c.tokens * c.tokens, tk, tk);
        dp.noalias() = DO.block(r0, c0, tk, dhi) * V.block(r0, c0, tk, dhi).transpose();
        DV.block(r0, c0, tk, dhi).noalias() = P.transpose() * DO.block(r0, c0, tk, dhi);
        ops::softmax_backward_rows(P.data(), dp.data(), ds.data(), c.tokens, c.tokens);
        ds *= scale;
        DQ.block(r0, c0, tk, dhi).noalias() = ds * K.block(r0, c0, tk, dhi);
        DK.block(r0, c0, tk, dhi).noalias() = ds.transpose() * Q.block(r0, c0, tk, dhi);
      }
    dq.reshape(c.shape);
    dk.reshape(c.shape);
    dv.reshape(c.shape);
    Tensor<T> dx = wq_.backward(dq);
    const Tensor<T> dxk = wk_.backward(dk);
    const Tensor<T> dxv = wv_.backward(dv);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    wq_.visit(f);
    wk_.visit(f);
    wv_.visit(f);
    wo_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    wq_.visit(f);
    wk_.visit(f);
    wv_.visit(f);
    wo_.visit(f);
  }

 private:
  struct Cache {
    Shape shape;
    std::size_t groups = 0, tokens = 0;
    Tensor<T> q, k, v, probs;
  };

  void bind(const Tensor<T>& x, Cache& c) const {
    if (x.rank() < 2 || x.shape().back() != d_model_)
      throw std::invalid_argument("multi_head_attention: input " + shape_str(x.shape()) + " incompatible with d=" +
                                  std::to_string(d_model_));
    c.shape = x.shape();
    c.tokens = x.dim(x.rank() - 2);
    c.groups = x.size() / (c.tokens * d_model_);
  }

  // Softmax(Q K^T / sqrt(dh)) V per (group, head); stores the probabilities.
  Tensor<T> attend(const Shape& shape, Cache& c) const {
    const std::size_t rows = c.groups * c.tokens;
    const std::size_t dh = d_model_ / n_head_;
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    c.probs = Tensor<T>({c.groups, n_head_, c.tokens, c.tokens});
    Tensor<T> concat(shape);
    auto Q = as_matrix(std::as_const(c.q), rows, d_model_);
    auto K = as_matrix(std::as_const(c.k), rows, d_model_);
    auto V = as_matrix(std::as_const(c.v), rows, d_model_);
    auto O = as_matrix(concat, rows, d_model_);
    const auto tk = static_cast<Eigen::Index>(c.tokens);
    const auto dhi = static_cast<Eigen::Index>(dh);
    for (std::size_t b = 0; b < c.groups; ++b)
      for (std::size_t h = 0; h < n_head_; ++h) {
        const auto r0 = static_cast<Eigen::Index>(b * c.tokens);
        const auto c0 = static_cast<Eigen::Index>(h * dh);
        MatMap<T> P(c.probs.ptr() + (b * n_head_ + h) * c.tokens * c.tokens, tk, tk);
        P.noalias() = Q.block(r0, c0, tk, dhi) * K.block(r0, c0, tk, dhi).transpose();
        P *= scale;
        ops::softmax_rows(P.data(), c.tokens, c.tokens);
        O.block(r0, c0, tk, dhi).noalias() = P * V.block(r0, c0, tk, dhi);
      }
    return concat;
  }

  Linear<T> wq_, wk_, wv_, wo_;
  std::size_t d_model_ = 0;
  std::size_t n_head_ = 1;
  Cache cache_;
};

}  // namespace gaitphase
