#pragma once

// Masked-channel reconstruction pre-training. The encoder side (embedding,
// positional term, encoder stack) uses the same parameter names as
// TctstModel so it transfers by name; a decoder stack and a per-token linear
// map back to the window length are discarded afterwards.
//
// Variants: without decoder (use_decoder=false), feature-space targets
// (reconstruct_features=true), 2-D channel x time-block masks (mask_2d=true)
// and IMU-only input (include_phase_channels=false).

#include "gaitphase/data/masking.hpp"
#include "gaitphase/data/windows.hpp"
#include "gaitphase/model/checkpoint.hpp"
#include "gaitphase/model/tctst.hpp"
#include "gaitphase/train/fit.hpp"

#include <ostream>

namespace gaitphase {

struct PretrainConfig {
  double mask_ratio = 0.3;
  std::size_t window_stride = 10;
  bool use_decoder = true;
  bool reconstruct_features = false;
  bool mask_2d = false;
  std::size_t block_len = 10;
  bool include_phase_channels = true;
  FitConfig fit{100, 10, 1024, 0, {}, {}};

  std::string variant() const {
    if (!use_decoder) return "wdl";
    if (reconstruct_features) return "fvr";
    if (mask_2d) return "nclm";
    if (!include_phase_channels) return "wpsv";
    return "full";
  }

  void validate(const TctstConfig& model) const {
    check_mask_ratio(mask_ratio);
    if (window_stride == 0) throw std::invalid_argument("pretrain config: window_stride must be >= 1");
    if (mask_2d && (block_len == 0 || model.lookback % block_len != 0))
      throw std::invalid_argument("pretrain config: block_len must divide the lookback");
    if (mask_2d && reconstruct_features)
      throw std::invalid_argument("pretrain config: feature targets are per channel token; 2-D masks are not supported");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PretrainConfig, mask_ratio, window_stride, use_decoder,
                                                reconstruct_features, mask_2d, block_len, include_phase_channels, fit)

// Mean over samples of the masked-element MSE. Channel masks: mean over
// masked channels of each channel's MSE over the last axis. 2-D masks: mean
// over the masked elements (blocks have equal size, so this is also the
// mean of per-block MSEs). pred/target are [B, C, D]; grad, when given,
// receives d loss / d pred.
template <typename T>
double masked_mse(const Tensor<T>& pred, const Tensor<T>& target, std::span<const MaskSpec> masks,
                  Tensor<T>* grad = nullptr) {
  if (pred.shape() != target.shape() || pred.rank() != 3)
    throw std::invalid_argument("reconstruction_loss: shapes " + shape_str(pred.shape()) + " and " +
                                shape_str(target.shape()) + " differ or are not [B, C, D]");
  const std::size_t b = pred.dim(0), c = pred.dim(1), d = pred.dim(2);
  if (masks.size() != b) throw std::invalid_argument("reconstruction_loss: one mask per sample required");
  if (grad) *grad = Tensor<T>(pred.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const MaskSpec& m = masks[i];
    const T* p = pred.ptr() + i * c * d;
    const T* t = target.ptr() + i * c * d;
    T* g = grad ? grad->ptr() + i * c * d : nullptr;
    double sample = 0.0;
    if (m.is_2d()) {
      if (m.blocks.empty()) throw std::invalid_argument("reconstruction_loss: empty mask");
      const double count = static_cast<double>(m.blocks.size() * m.block_len);
      for (const auto& blk : m.blocks)
        for (std::size_t k = 0; k < m.block_len; ++k) {
          const std::size_t at = blk.channel * d + blk.block * m.block_len + k;
          const double e = static_cast<double>(p[at]) - static_cast<double>(t[at]);
          sample += e * e;
          if (g) g[at] = static_cast<T>(2.0 * e / (count * static_cast<double>(b)));
        }
      sample /= count;
    } else {
      if (m.channels.empty()) throw std::invalid_argument("reconstruction_loss: empty mask");
      const double scale = static_cast<double>(m.channels.size() * d);
      for (auto ch : m.channels) {
        if (ch >= c) throw std::out_of_range("reconstruction_loss: masked channel out of range");
        for (std::size_t k = 0; k < d; ++k) {
          const std::size_t at = ch * d + k;
          const double e = static_cast<double>(p[at]) - static_cast<double>(t[at]);
          sample += e * e;
          if (g) g[at] = static_cast<T>(2.0 * e / (scale * static_cast<double>(b)));
        }
      }
      sample /= scale;
    }
    total += sample;
  }
  return total / static_cast<double>(b);
}

// Single-window form: recon and original are [C, L].
template <typename T>
double reconstruction_loss(const Tensor<T>& recon, const Tensor<T>& original, const MaskSpec& mask) {
  if (recon.rank() != 2) throw std::invalid_argument("reconstruction_loss: expected [C, L]");
  const Shape s{1, recon.dim(0), recon.dim(1)};
  const MaskSpec masks[] = {mask};
  return masked_mse(recon.reshaped(s), original.reshaped(s), std::span<const MaskSpec>(masks));
}

template <typename T>
class PretrainModel {
 public:
  PretrainModel(const TctstConfig& model_cfg, const PretrainConfig& cfg, std::uint64_t seed)
      : cfg_(adjust(model_cfg, cfg)),
        pre_(cfg),
        embed_(cfg_),
        pos_("pos", cfg_.channels, cfg_.emb_dim, cfg_.pos_enc),
        encoder_("encoder", cfg_.n_layers, cfg_.emb_dim, cfg_.n_head, cfg_.ffn_dim(), cfg_.qkv_bias),
        decoder_("decoder", cfg.use_decoder ? cfg_.n_layers : 0, cfg_.emb_dim, cfg_.n_head, cfg_.ffn_dim(),
                 cfg_.qkv_bias),
        recon_("recon", cfg_.emb_dim, cfg_.lookback) {
    cfg.validate(cfg_);
    RngStream rng(seed);
    embed_.init(rng);
    pos_.init(rng);
    encoder_.init(rng);
    decoder_.init(rng);
    recon_.init(rng);
  }

  const TctstConfig& config() const { return cfg_; }
  const PretrainConfig& pretrain_config() const { return pre_; }
  std::size_t decoder_depth() const { return decoder_.depth(); }

  // [B, C, L] -> reconstruction [B, C, L], or decoder tokens [B, C, emb] for
  // feature targets.
  Tensor<T> infer(const Tensor<T>& x_masked) const {
    check_input(x_masked);
    Tensor<T> h = decoder_.infer(encoder_.infer(pos_.apply(embed_.infer(x_masked))));
    return pre_.reconstruct_features ? h : recon_.infer(h);
  }

  Tensor<T> forward(const Tensor<T>& x_masked) {
    check_input(x_masked);
    Tensor<T> h = decoder_.forward(encoder_.forward(pos_.apply(embed_.forward(x_masked))));
    return pre_.reconstruct_features ? h : recon_.forward(h);
  }

  void backward(const Tensor<T>& dout) {
    Tensor<T> d = pre_.reconstruct_features ? dout : recon_.backward(dout);
    d = encoder_.backward(decoder_.backward(d));
    pos_.backward(d);
    embed_.backward(d);
  }

  // Feature-space target: embedding plus positional term of the unmasked
  // input, treated as a constant.
  Tensor<T> feature_target(const Tensor<T>& x) const { return pos_.apply(embed_.infer(x)); }

  template <typename F>
  void visit(F&& f) {
    embed_.visit(f);
    pos_.visit(f);
    encoder_.visit(f);
    decoder_.visit(f);
    if (!pre_.reconstruct_features) recon_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    embed_.visit(f);
    pos_.visit(f);
    encoder_.visit(f);
    decoder_.visit(f);
    if (!pre_.reconstruct_features) recon_.visit(f);
  }

 private:
  static TctstConfig adjust(TctstConfig c, const PretrainConfig& p) {
    c.channels = p.include_phase_channels ? kModelChannels : kImuChannels;
    c.validate();
    return c;
  }

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.lookback)
      throw std::invalid_argument("pretrain_forward: expected [B, " + std::to_string(cfg_.channels) + ", " +
                                  std::to_string(cfg_.lookback) + "], got " + shape_str(x.shape()));
    ensure_finite(x, "pretrain_forward input");
  }

  TctstConfig cfg_;
  PretrainConfig pre_;
  ChannelEmbedding<T> embed_;
  Positional<T> pos_;
  TransformerStack<T> encoder_;
  TransformerStack<T> decoder_;
  Linear<T> recon_;
};

// First `channels` rows of every sample of a [B, C, L] batch.
template <typename T>
Tensor<T> leading_channels(const Tensor<T>& x, std::size_t channels) {
  if (channels == x.dim(1)) return x;
  const std::size_t b = x.dim(0), c = x.dim(1), len = x.dim(2);
  Tensor<T> out({b, channels, len});
  for (std::size_t i = 0; i < b; ++i) std::copy_n(x.ptr() + i * c * len, channels * len, out.ptr() + i * channels * len);
  return out;
}

// Loss (and gradient into the model) for one batch of unmasked windows.
template <typename T>
double pretrain_step_loss(PretrainModel<T>& model, const Tensor<T>& x_full, RngStream& mask_rng, bool train) {
  const auto& pc = model.pretrain_config();
  const Tensor<T> x = leading_channels(x_full, model.config().channels);
  auto [masked, specs] = mask_batch(x, pc.mask_ratio, pc.mask_2d ? pc.block_len : 0, mask_rng);
  const Tensor<T> target = pc.reconstruct_features ? model.feature_target(x) : x;
  if (!train) return masked_mse(model.infer(masked), target, std::span<const MaskSpec>(specs));
  Tensor<T> grad;
  const double loss = masked_mse(model.forward(masked), target, std::span<const MaskSpec>(specs), &grad);
  model.backward(grad);
  return loss;
}

struct PretrainResult {
  Checkpoint checkpoint;
  FitResult fit;
  double initial_val_loss = 0.0;  // before the first update
};

inline constexpr std::uint64_t kValidationMaskSeed = 0x5EEDF00DULL;

// Trains on `train` windows (phase channels included when configured) and
// returns the best-validation weights. Validation masks come from a fixed
// stream so the validation loss is comparable across epochs.
template <typename T = float>
PretrainResult pretrain_run(const WindowDataset& train, const WindowDataset& val, const TctstConfig& model_cfg,
                            const PretrainConfig& cfg, std::uint64_t seed, std::ostream* log = nullptr) {
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("pretrain_run: empty dataset");
  if (train.lookback() != model_cfg.lookback || val.lookback() != model_cfg.lookback)
    throw std::invalid_argument("pretrain_run: window length differs from the model lookback");
  const RngStream root(seed);
  PretrainModel<T> model(model_cfg, cfg, root.fork(1).next_u64());
  auto params = parameter_list<T>(model);
  Adam<T> adam(cfg.fit.adam);
  RngStream shuffle_rng = root.fork(2);
  RngStream mask_rng = root.fork(3);

  auto validate = [&] {
    RngStream vrng(kValidationMaskSeed);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < val.size(); i += cfg.fit.batch_size) {
      std::vector<std::size_t> idx(std::min(cfg.fit.batch_size, val.size() - i));
      std::iota(idx.begin(), idx.end(), i);
      auto [x, y] = val.batch<T>(idx);
      sum += pretrain_step_loss(model, x, vrng, false) * static_cast<double>(idx.size());
      n += idx.size();
    }
    return sum / static_cast<double>(n);
  };

  auto train_epoch = [&](std::size_t, double factor) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& idx : make_batches(train.size(), cfg.fit.batch_size, shuffle_rng, cfg.fit.max_batches_per_epoch)) {
      auto [x, y] = train.batch<T>(idx);
      zero_grad(model);
      const double loss = pretrain_step_loss(model, x, mask_rng, true);
      check_loss(loss, "pretrain");
      adam.step(params, factor);
      sum += loss * static_cast<double>(idx.size());
      n += idx.size();
    }
    return sum / static_cast<double>(n);
  };

  PretrainResult res;
  res.initial_val_loss = validate();
  std::vector<NamedTensor> best = capture_parameters(model);
  res.fit = fit(cfg.fit, train_epoch, validate, [&] { best = capture_parameters(model); }, log, "pretrain");

  res.checkpoint.kind = "pretrain";
  res.checkpoint.config = {{"model", model.config()}, {"pretrain", cfg}};
  res.checkpoint.norm = train.stats;
  res.checkpoint.seeds = {{"seed", seed}};
  res.checkpoint.extra = {{"variant", cfg.variant()},
                          {"best_epoch", res.fit.best_epoch},
                          {"best_val_loss", res.fit.best_val},
                          {"initial_val_loss", res.initial_val_loss},
                          {"early_stopped", res.fit.early_stopped}};
  res.checkpoint.params = std::move(best);
  return res;
}

// Copies embedding, positional and encoder parameters from a pre-training
// checkpoint into `model` by name; everything else keeps its fresh init.
// An IMU-only checkpoint has a shorter positional table, whose entries fill
// the leading (IMU) channels.
template <typename Model>
std::vector<std::string> transfer_weights(const Checkpoint& pre, Model& model) {
  std::vector<std::string> moved;
  model.visit([&](auto& p) {
    using T = typename std::decay_t<decltype(p.value)>::value_type;
    const bool transferable = p.name.starts_with("embed.") || p.name == "pos" || p.name.starts_with("encoder.");
    if (!transferable) return;
    const NamedTensor* src = pre.find(p.name);
    if (!src) throw std::runtime_error("transfer_weights: checkpoint has no parameter " + p.name);
    const auto& s = src->value.shape();
    const auto& d = p.value.shape();
    const bool prefix = p.name == "pos" && s.size() == d.size() && s[0] < d[0] &&
                        std::equal(s.begin() + 1, s.end(), d.begin() + 1);
    if (s != d && !prefix)
      throw std::runtime_error("transfer_weights: parameter " + p.name + " has shape " + shape_str(s) +
                               ", model expects " + shape_str(d));
    for (std::size_t i = 0; i < src->value.size(); ++i) p.value[i] = static_cast<T>(src->value[i]);
    moved.push_back(p.name);
  });
  return moved;
}

}  // namespace gaitphase
