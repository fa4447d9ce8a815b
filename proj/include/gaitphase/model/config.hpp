#pragma once

#include "json.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gaitphase {

enum class EmbeddingKind { Tcn, Mlp, Patch };
enum class PositionalKind { Scalar, Full };

NLOHMANN_JSON_SERIALIZE_ENUM(EmbeddingKind, {{EmbeddingKind::Tcn, "tcn"},
                                             {EmbeddingKind::Mlp, "mlp"},
                                             {EmbeddingKind::Patch, "patch"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PositionalKind, {{PositionalKind::Scalar, "scalar"}, {PositionalKind::Full, "full"}})

// Architecture of the channel-token network. Defaults are the full-scale
// configuration; `desk()` is the reduced one used for CPU runs.
struct TctstConfig {
  std::size_t channels = 24;
  std::size_t lookback = 100;
  std::size_t emb_dim = 384;
  std::size_t n_head = 8;
  std::size_t n_layers = 8;
  double mlp_ratio = 4.0;
  std::size_t latent_dim = 128;
  double head_dropout = 0.1;
  bool qkv_bias = true;
  EmbeddingKind embedding = EmbeddingKind::Tcn;
  PositionalKind pos_enc = PositionalKind::Scalar;

  // Widths of the embedding variants.
  std::size_t tcn_channels1 = 32;
  std::size_t tcn_channels2 = 64;
  std::size_t mlp_hidden = 192;
  std::size_t patch_len = 10;
  std::size_t patch_dim = 32;

  static TctstConfig desk() {
    TctstConfig c;
    c.emb_dim = 64;
    c.n_head = 4;
    c.n_layers = 2;
    return c;
  }

  std::size_t ffn_dim() const { return static_cast<std::size_t>(std::llround(mlp_ratio * emb_dim)); }

  void validate() const {
    if (channels == 0 || lookback == 0 || emb_dim == 0) throw std::invalid_argument("model config: zero dimension");
    if (n_head == 0 || emb_dim % n_head != 0)
      throw std::invalid_argument("model config: emb_dim must be divisible by n_head");
    if (std::fabs(mlp_ratio * emb_dim - std::round(mlp_ratio * emb_dim)) > 1e-9)
      throw std::invalid_argument("model config: mlp_ratio * emb_dim must be integral");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) throw std::invalid_argument("model config: dropout in [0, 1)");
    if (embedding == EmbeddingKind::Tcn && lookback < 4)
      throw std::invalid_argument("model config: TCN embedding needs lookback >= 4");
    if (embedding == EmbeddingKind::Patch && lookback % patch_len != 0)
      throw std::invalid_argument("model config: patch embedding needs lookback divisible by patch_len");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TctstConfig, channels, lookback, emb_dim, n_head, n_layers, mlp_ratio,
                                                latent_dim, head_dropout, qkv_bias, embedding, pos_enc, tcn_channels1,
                                                tcn_channels2, mlp_hidden, patch_len, patch_dim)

}  // namespace gaitphase
