#pragma once

#include "gaitphase/numerics/layers.hpp"

#include <vector>

namespace gaitphase {

// Pre-norm block: x += MHA(LN(x)); x += FFN(LN(x)), FFN = fc2(relu(fc1(.))).
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& name, std::size_t d, std::size_t n_head, std::size_t ffn, bool qkv_bias)
      : ln1_(name + ".ln1", d),
        attn_(name + ".attn", d, n_head, qkv_bias),
        ln2_(name + ".ln2", d),
        fc1_(name + ".ffn.fc1", d, ffn),
        fc2_(name + ".ffn.fc2", ffn, d) {}

  void init(RngStream& rng) {
    ln1_.init(rng);
    attn_.init(rng);
    ln2_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> h = x;
    add_into(h, attn_.infer(ln1_.infer(x)));
    Tensor<T> y = h;
    add_into(y, fc2_.infer(ops::relu(fc1_.infer(ln2_.infer(h)))));
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    add_into(h, attn_.forward(ln1_.forward(x)));
    hidden_ = fc1_.forward(ln2_.forward(h));
    Tensor<T> y = h;
    add_into(y, fc2_.forward(ops::relu(hidden_)));
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dh = dy;
    add_into(dh, ln2_.backward(fc1_.backward(ops::relu_backward(hidden_, fc2_.backward(dy)))));
    Tensor<T> dx = dh;
    add_into(dx, ln1_.backward(attn_.backward(dh)));
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    ln1_.visit(f);
    attn_.visit(f);
    ln2_.visit(f);
    fc1_.visit(f);
    fc2_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    ln1_.visit(f);
    attn_.visit(f);
    ln2_.visit(f);
    fc1_.visit(f);
    fc2_.visit(f);
  }

 private:
  static void add_into(Tensor<T>& acc, const Tensor<T>& v) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }

  LayerNorm<T> ln1_;
  MultiHeadAttention<T> attn_;
  LayerNorm<T> ln2_;
  Linear<T> fc1_, fc2_;
  Tensor<T> hidden_;
};

// Stack of N pre-norm layers; N = 0 is the identity.
template <typename T>
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const std::string& name, std::size_t n_layers, std::size_t d, std::size_t n_head,
                   std::size_t ffn, bool qkv_bias) {
    for (std::size_t i = 0; i < n_layers; ++i)
      layers_.emplace_back(name + ".layer" + std::to_string(i), d, n_head, ffn, qkv_bias);
  }

  std::size_t depth() const { return layers_.size(); }

  void init(RngStream& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  Tensor<T> infer(Tensor<T> x) const {
    for (const auto& l : layers_) x = l.infer(x);
    return x;
  }
  Tensor<T> forward(Tensor<T> x) {
    for (auto& l : layers_) x = l.forward(x);
    return x;
  }
  Tensor<T> backward(Tensor<T> dy) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dy = it->backward(dy);
    return dy;
  }

  template <typename F>
  void visit(F&& f) {
    for (auto& l : layers_) l.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    for (const auto& l : layers_) l.visit(f);
  }

 private:
  std::vector<TransformerLayer<T>> layers_;
};

}  // namespace gaitphase
