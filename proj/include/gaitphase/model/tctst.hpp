#pragma once

// Channel-token gait phase network: channel-wise embedding, learnable
// positional term, pre-norm Transformer encoder over channel tokens, mean
// pooling over channels, and a two-layer head producing [cos, sin, rate].

#include "gaitphase/model/config.hpp"
#include "gaitphase/model/embedding.hpp"
#include "gaitphase/model/transformer.hpp"

#include <cstdint>
#include <vector>

namespace gaitphase {

inline constexpr std::size_t kPhaseOutputs = 3;

// Learnable positional term: one scalar per channel broadcast over the
// embedding (Scalar) or a full [C, emb] table (Full).
template <typename T>
class Positional {
 public:
  Positional() = default;
  Positional(const std::string& name, std::size_t tokens, std::size_t emb, PositionalKind kind)
      : table_(name, kind == PositionalKind::Scalar ? Shape{tokens} : Shape{tokens, emb}), tokens_(tokens), emb_(emb) {}

  void init(RngStream& rng) {
    for (auto& v : table_.value.data()) v = static_cast<T>(rng.uniform(-0.02, 0.02));
  }

  bool scalar() const { return table_.value.rank() == 1; }

  Tensor<T> apply(Tensor<T> e) const {
    check(e);
    const std::size_t groups = e.size() / (tokens_ * emb_);
    for (std::size_t b = 0; b < groups; ++b)
      for (std::size_t c = 0; c < tokens_; ++c) {
        T* row = e.ptr() + (b * tokens_ + c) * emb_;
        for (std::size_t d = 0; d < emb_; ++d) row[d] += scalar() ? table_.value[c] : table_.value[c * emb_ + d];
      }
    return e;
  }

  // Input gradient is dy itself; only the table gradient is accumulated.
  void backward(const Tensor<T>& dy) {
    const std::size_t groups = dy.size() / (tokens_ * emb_);
    for (std::size_t b = 0; b < groups; ++b)
      for (std::size_t c = 0; c < tokens_; ++c) {
        const T* row = dy.ptr() + (b * tokens_ + c) * emb_;
        for (std::size_t d = 0; d < emb_; ++d) {
          if (scalar())
            table_.grad[c] += row[d];
          else
            table_.grad[c * emb_ + d] += row[d];
        }
      }
  }

  template <typename F>
  void visit(F&& f) {
    f(table_);
  }
  template <typename F>
  void visit(F&& f) const {
    f(table_);
  }

 private:
  void check(const Tensor<T>& e) const {
    if (e.rank() < 2 || e.dim(e.rank() - 1) != emb_ || e.dim(e.rank() - 2) != tokens_)
      throw std::invalid_argument("add_positional: tokens " + shape_str(e.shape()) + " do not match [" +
                                  std::to_string(tokens_) + ", " + std::to_string(emb_) + "]");
  }

  Parameter<T> table_;
  std::size_t tokens_ = 0, emb_ = 0;
};

// Mean over the token axis: [B, N, d] -> [B, d].
template <typename T>
Tensor<T> mean_over_tokens(const Tensor<T>& x) {
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  Tensor<T> y({b, d});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) y[i * d + j] += x[(i * n + c) * d + j];
  const T inv = T{1} / static_cast<T>(n);
  for (auto& v : y.data()) v *= inv;
  return y;
}

template <typename T>
Tensor<T> mean_over_tokens_backward(const Tensor<T>& dy, std::size_t n) {
  const std::size_t b = dy.dim(0), d = dy.dim(1);
  Tensor<T> dx({b, n, d});
  const T inv = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) dx[(i * n + c) * d + j] = dy[i * d + j] * inv;
  return dx;
}

// emb -> latent -> relu -> dropout -> 3
template <typename T>
class PhaseHead {
 public:
  PhaseHead() = default;
  PhaseHead(const std::string& name, std::size_t in, std::size_t latent, double dropout)
      : fc1_(name + ".fc1", in, latent), fc2_(name + ".fc2", latent, kPhaseOutputs), dropout_(dropout) {}

  void init(RngStream& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const { return fc2_.infer(ops::relu(fc1_.infer(x))); }

  // Dropout is active only when `rng` is given.
  Tensor<T> forward(const Tensor<T>& x, RngStream* rng) {
    hidden_ = fc1_.forward(x);
    Tensor<T> h = ops::relu(hidden_);
    if (rng) h = ops::dropout(h, dropout_, *rng, true, &mask_);
    else mask_ = Tensor<T>(h.shape(), T{1});
    return fc2_.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = fc2_.backward(dy);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mask_[i];
    return fc1_.backward(ops::relu_backward(hidden_, d));
  }

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
  Linear<T> fc1_, fc2_;
  double dropout_ = 0.0;
  Tensor<T> hidden_, mask_;
};

template <typename T>
class TctstModel {
 public:
  TctstModel(const TctstConfig& cfg, std::uint64_t seed)
      : cfg_((cfg.validate(), cfg)),
        embed_(cfg),
        pos_("pos", cfg.channels, cfg.emb_dim, cfg.pos_enc),
        encoder_("encoder", cfg.n_layers, cfg.emb_dim, cfg.n_head, cfg.ffn_dim(), cfg.qkv_bias),
        head_("head", cfg.emb_dim, cfg.latent_dim, cfg.head_dropout) {
    RngStream rng(seed);
    embed_.init(rng);
    pos_.init(rng);
    encoder_.init(rng);
    head_.init(rng);
  }

  const TctstConfig& config() const { return cfg_; }

  // Eval mode: no dropout, no caching. x: [B, C, L] -> [B, 3].
  Tensor<T> predict(const Tensor<T>& x) const {
    check_input(x);
    Tensor<T> tokens = encoder_.infer(pos_.apply(embed_.infer(x)));
    return head_.infer(mean_over_tokens(tokens));
  }

  // Training forward; records activations for backward(). Dropout runs only
  // when `dropout_rng` is non-null.
  Tensor<T> forward(const Tensor<T>& x, RngStream* dropout_rng) {
    check_input(x);
    Tensor<T> tokens = encoder_.forward(pos_.apply(embed_.forward(x)));
    return head_.forward(mean_over_tokens(tokens), dropout_rng);
  }

  void backward(const Tensor<T>& dout) {
    Tensor<T> d = mean_over_tokens_backward(head_.backward(dout), cfg_.channels);
    d = encoder_.backward(d);
    pos_.backward(d);
    embed_.backward(d);
  }

  template <typename F>
  void visit(F&& f) {
    embed_.visit(f);
    pos_.visit(f);
    encoder_.visit(f);
    head_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    embed_.visit(f);
    pos_.visit(f);
    encoder_.visit(f);
    head_.visit(f);
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.lookback)
      throw std::invalid_argument("model_forward: expected [B, " + std::to_string(cfg_.channels) + ", " +
                                  std::to_string(cfg_.lookback) + "], got " + shape_str(x.shape()));
    ensure_finite(x, "model_forward input");
  }

  TctstConfig cfg_;
  ChannelEmbedding<T> embed_;
  Positional<T> pos_;
  TransformerStack<T> encoder_;
  PhaseHead<T> head_;
};

// Patch-token baseline: patches of patch_len samples spanning all channels,
// flattened, projected to emb_dim, plus a learnable [P, emb] table.
template <typename T>
class PatchTstModel {
 public:
  PatchTstModel(const TctstConfig& cfg, std::uint64_t seed)
      : cfg_((cfg.validate(), cfg)),
        proj_("patch_proj", cfg.channels * cfg.patch_len, cfg.emb_dim),
        pos_("pos", n_patches(), cfg.emb_dim, PositionalKind::Full),
        encoder_("encoder", cfg.n_layers, cfg.emb_dim, cfg.n_head, cfg.ffn_dim(), cfg.qkv_bias),
        head_("head", cfg.emb_dim, cfg.latent_dim, cfg.head_dropout) {
    if (cfg.lookback % cfg.patch_len != 0)
      throw std::invalid_argument("patchtst: lookback must be divisible by the patch length");
    RngStream rng(seed);
    proj_.init(rng);
    pos_.init(rng);
    encoder_.init(rng);
    head_.init(rng);
  }

  const TctstConfig& config() const { return cfg_; }
  std::size_t n_patches() const { return cfg_.lookback / cfg_.patch_len; }

  // [B, C, L] -> [B, P, C * patch_len], features ordered (channel, offset).
  Tensor<T> patchify(const Tensor<T>& x) const {
    check_input(x);
    const std::size_t b = x.dim(0), c = cfg_.channels, p = n_patches(), len = cfg_.patch_len;
    Tensor<T> out({b, p, c * len});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t j = 0; j < len; ++j)
            out[(i * p + k) * c * len + ch * len + j] = x[(i * c + ch) * cfg_.lookback + k * len + j];
    return out;
  }

  Tensor<T> predict(const Tensor<T>& x) const {
    Tensor<T> tokens = encoder_.infer(pos_.apply(proj_.infer(patchify(x))));
    return head_.infer(mean_over_tokens(tokens));
  }

  Tensor<T> forward(const Tensor<T>& x, RngStream* dropout_rng) {
    Tensor<T> tokens = encoder_.forward(pos_.apply(proj_.forward(patchify(x))));
    return head_.forward(mean_over_tokens(tokens), dropout_rng);
  }

  void backward(const Tensor<T>& dout) {
    Tensor<T> d = mean_over_tokens_backward(head_.backward(dout), n_patches());
    d = encoder_.backward(d);
    pos_.backward(d);
    proj_.backward(d);
  }

  template <typename F>
  void visit(F&& f) {
    proj_.visit(f);
    pos_.visit(f);
    encoder_.visit(f);
    head_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    proj_.visit(f);
    pos_.visit(f);
    encoder_.visit(f);
    head_.visit(f);
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.lookback)
      throw std::invalid_argument("patchtst_forward: expected [B, " + std::to_string(cfg_.channels) + ", " +
                                  std::to_string(cfg_.lookback) + "], got " + shape_str(x.shape()));
    ensure_finite(x, "patchtst_forward input");
  }

  TctstConfig cfg_;
  Linear<T> proj_;
  Positional<T> pos_;
  TransformerStack<T> encoder_;
  PhaseHead<T> head_;
};

template <typename T, typename Model>
std::vector<Parameter<T>*> parameter_list(Model& m) {
  std::vector<Parameter<T>*> out;
  m.visit([&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename Model>
std::size_t parameter_count(const Model& m) {
  std::size_t n = 0;
  m.visit([&](const auto& p) { n += p.value.size(); });
  return n;
}

template <typename Model>
void zero_grad(Model& m) {
  m.visit([](auto& p) { p.zero_grad(); });
}

}  // namespace gaitphase
