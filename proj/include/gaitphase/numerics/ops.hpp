#pragma once

// Layer catalog as free functions. Every `*_backward` accumulates into the
// parameter-gradient arguments and returns the input gradient.

#include "gaitphase/numerics/rng.hpp"
#include "gaitphase/numerics/tensor.hpp"

#include <cstdint>
#include <limits>

namespace gaitphase::ops {

// ---------------------------------------------------------------- relu

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > T{0})) dx[i] = T{0};
  return dx;
}

// ---------------------------------------------------------------- linear

// y = x W^T + b over the trailing dimension. W: [out, in], b: [out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.rank() != 2) throw std::invalid_argument("linear: weight must be [out, in]");
  const std::size_t out = w.dim(0), in = w.dim(1);
  if (x.rank() == 0 || x.shape().back() != in)
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                                shape_str(w.shape()));
  if (!b.empty() && b.size() != out) throw std::invalid_argument("linear: bias size mismatch");
  const std::size_t rows = x.size() / in;
  Shape ys = x.shape();
  ys.back() = out;
  Tensor<T> y(ys);
  auto Y = as_matrix(y, rows, out);
  Y.noalias() = as_matrix(x, rows, in) * as_matrix(w, out, in).transpose();
  if (!b.empty()) Y.rowwise() += as_row(b);
  ensure_finite(y, "linear");
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>& dw,
                          Tensor<T>* db) {
  const std::size_t out = w.dim(0), in = w.dim(1);
  const std::size_t rows = x.size() / in;
  auto DY = as_matrix(dy, rows, out);
  as_matrix(dw, out, in).noalias() += DY.transpose() * as_matrix(x, rows, in);
  if (db) as_row(*db) += DY.colwise().sum();
  Tensor<T> dx(x.shape());
  as_matrix(dx, rows, in).noalias() = DY * as_matrix(w, out, in);
  return dx;
}

// ---------------------------------------------------------------- conv1d

struct Conv1dGeometry {
  std::size_t batch, c_in, length, c_out, kernel, l_out;
  int padding, stride;
};

template <typename T>
Conv1dGeometry conv1d_geometry(const Tensor<T>& x, const Tensor<T>& kernels, int padding, int stride) {
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv1d: padding must be >= 0");
  if (kernels.rank() != 3) throw std::invalid_argument("conv1d: kernels must be [C_out, C_in, k]");
  if (x.rank() != 2 && x.rank() != 3) throw std::invalid_argument("conv1d: input must be [C_in, L] or [N, C_in, L]");
  Conv1dGeometry g{};
  g.batch = x.rank() == 3 ? x.dim(0) : 1;
  g.c_in = x.dim(x.rank() - 2);
  g.length = x.dim(x.rank() - 1);
  g.c_out = kernels.dim(0);
  g.kernel = kernels.dim(2);
  g.padding = padding;
  g.stride = stride;
  if (kernels.dim(1) != g.c_in) throw std::invalid_argument("conv1d: channel mismatch");
  const long span = static_cast<long>(g.length) + 2L * padding - static_cast<long>(g.kernel);
  if (span < 0) throw std::invalid_argument("conv1d: input shorter than kernel");
  g.l_out = static_cast<std::size_t>(span / stride) + 1;
  return g;
}

namespace detail {

// Output positions t in [lo, hi) read input index t * stride + kk - padding
// inside [0, length).
inline std::pair<std::size_t, std::size_t> conv1d_valid(const Conv1dGeometry& g, std::size_t kk) {
  const long off = static_cast<long>(kk) - g.padding;
  const long lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  const long last = static_cast<long>(g.length) - 1 - off;  // t * stride <= last
  const long hi = last < 0 ? 0 : last / g.stride + 1;
  const long n = static_cast<long>(g.l_out);
  return {static_cast<std::size_t>(std::clamp(lo, 0L, n)), static_cast<std::size_t>(std::clamp(hi, 0L, n))};
}

// Columns of one sample: row (ci * k + kk) starts at cols + row * ld;
// zero outside the padded input.
template <typename T>
void conv1d_im2col(const T* x, const Conv1dGeometry& g, T* cols, std::size_t ld) {
  for (std::size_t kk = 0; kk < g.kernel; ++kk) {
    const auto [lo, hi] = conv1d_valid(g, kk);
    const long off = static_cast<long>(kk) - g.padding;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      T* dst = cols + (ci * g.kernel + kk) * ld;
      const T* src = x + ci * g.length;
      for (std::size_t t = 0; t < lo; ++t) dst[t] = T{0};
      if (g.stride == 1) {
        if (hi > lo) std::copy(src + (static_cast<long>(lo) + off), src + (static_cast<long>(hi) + off), dst + lo);
      } else {
        for (std::size_t t = lo; t < hi; ++t) dst[t] = src[static_cast<long>(t) * g.stride + off];
      }
      for (std::size_t t = std::max(lo, hi); t < g.l_out; ++t) dst[t] = T{0};
    }
  }
}

// Scatter-add of one sample's column gradient back onto its input.
template <typename T>
void conv1d_col2im(const T* cols, std::size_t ld, const Conv1dGeometry& g, T* dx) {
  for (std::size_t kk = 0; kk < g.kernel; ++kk) {
    const auto [lo, hi] = conv1d_valid(g, kk);
    const long off = static_cast<long>(kk) - g.padding;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const T* src = cols + (ci * g.kernel + kk) * ld;
      T* dst = dx + ci * g.length;
      for (std::size_t t = lo; t < hi; ++t) dst[static_cast<long>(t) * g.stride + off] += src[t];
    }
  }
}

}  // namespace detail

// Samples per GEMM: keeps the column buffer near 32k elements so it stays
// in L2 together with the product.
inline std::size_t conv1d_group(const Conv1dGeometry& g) {
  const std::size_t per_sample = std::max<std::size_t>(g.c_in * g.kernel * g.l_out, 1);
  return std::clamp<std::size_t>(32768 / per_sample, 1, std::max<std::size_t>(g.batch, 1));
}

// Cross-correlation (no kernel flip), zero padding. Samples are processed in
// groups whose column buffer stays cache-resident.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, int padding, int stride) {
  const auto g = conv1d_geometry(x, kernels, padding, stride);
  if (!bias.empty() && bias.size() != g.c_out) throw std::invalid_argument("conv1d: bias size mismatch");
  const std::size_t kdim = g.c_in * g.kernel, group = conv1d_group(g);
  Shape ys = x.rank() == 3 ? Shape{g.batch, g.c_out, g.l_out} : Shape{g.c_out, g.l_out};
  Tensor<T> y(ys);
  const auto w = as_matrix(kernels, g.c_out, kdim);
  MatrixRM<T> cols(static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(group * g.l_out));
  MatrixRM<T> prod;
  for (std::size_t n0 = 0; n0 < g.batch; n0 += group) {
    const std::size_t m = std::min(group, g.batch - n0), width = m * g.l_out;
    for (std::size_t j = 0; j < m; ++j)
      detail::conv1d_im2col(x.ptr() + (n0 + j) * g.c_in * g.length, g, cols.data() + j * g.l_out,
                            static_cast<std::size_t>(cols.cols()));
    prod.noalias() = w * cols.leftCols(static_cast<Eigen::Index>(width));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t co = 0; co < g.c_out; ++co) {
        const T* src = prod.data() + co * width + j * g.l_out;
        T* dst = y.ptr() + ((n0 + j) * g.c_out + co) * g.l_out;
        const T bv = bias.empty() ? T{0} : bias[co];
        for (std::size_t t = 0; t < g.l_out; ++t) dst[t] = src[t] + bv;
      }
  }
  ensure_finite(y, "conv1d");
  return y;
}

template <typename T>
Tensor<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& dy, int padding,
                          int stride, Tensor<T>& dkernels, Tensor<T>* dbias) {
  const auto g = conv1d_geometry(x, kernels, padding, stride);
  const std::size_t kdim = g.c_in * g.kernel, group = conv1d_group(g);
  const auto w = as_matrix(kernels, g.c_out, kdim);
  auto dw = as_matrix(dkernels, g.c_out, kdim);
  MatrixRM<T> cols(static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(group * g.l_out));
  MatrixRM<T> dym(static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(group * g.l_out));
  MatrixRM<T> dcols;
  Tensor<T> dx(x.shape());
  for (std::size_t n0 = 0; n0 < g.batch; n0 += group) {
    const std::size_t m = std::min(group, g.batch - n0), width = m * g.l_out;
    const auto W = static_cast<Eigen::Index>(width);
    for (std::size_t j = 0; j < m; ++j) {
      detail::conv1d_im2col(x.ptr() + (n0 + j) * g.c_in * g.length, g, cols.data() + j * g.l_out,
                            static_cast<std::size_t>(cols.cols()));
      for (std::size_t co = 0; co < g.c_out; ++co) {
        const T* src = dy.ptr() + ((n0 + j) * g.c_out + co) * g.l_out;
        std::copy(src, src + g.l_out, dym.data() + co * dym.cols() + j * g.l_out);
      }
    }
    const auto d = dym.leftCols(W);
    dw.noalias() += d * cols.leftCols(W).transpose();
    if (dbias) as_row(*dbias) += d.rowwise().sum().transpose();
    dcols.noalias() = w.transpose() * d;
    for (std::size_t j = 0; j < m; ++j)
      detail::conv1d_col2im(dcols.data() + j * g.l_out, width, g, dx.ptr() + (n0 + j) * g.c_in * g.length);
  }
  return dx;
}

// ---------------------------------------------------------------- maxpool1d

// Windowed maximum over the trailing axis. `argmax` (optional) receives the
// flat input index chosen for every output element; ties pick the first.
template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x, std::size_t size, std::size_t stride,
                    std::vector<std::uint32_t>* argmax = nullptr) {
  if (size == 0 || stride == 0) throw std::invalid_argument("maxpool1d: size and stride must be >= 1");
  if (x.rank() == 0) throw std::invalid_argument("maxpool1d: scalar input");
  const std::size_t len = x.shape().back();
  if (len < size) throw std::invalid_argument("maxpool1d: length shorter than pool size");
  const std::size_t l_out = (len - size) / stride + 1;
  const std::size_t rows = x.size() / len;
  Shape ys = x.shape();
  ys.back() = l_out;
  Tensor<T> y(ys);
  if (argmax) argmax->assign(y.size(), 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < l_out; ++t) {
      std::size_t best = r * len + t * stride;
      for (std::size_t j = 1; j < size; ++j) {
        const std::size_t idx = r * len + t * stride + j;
        if (x[idx] > x[best]) best = idx;
      }
      y[r * l_out + t] = x[best];
      if (argmax) (*argmax)[r * l_out + t] = static_cast<std::uint32_t>(best);
    }
  return y;
}

template <typename T>
Tensor<T> maxpool1d_backward(const Shape& x_shape, const std::vector<std::uint32_t>& argmax, const Tensor<T>& dy) {
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------- layer_norm

template <typename T>
struct LayerNormCache {
  Tensor<T> normalized;   // (x - mean) * rstd
  std::vector<T> rstd;    // per row
};

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5),
                     LayerNormCache<T>* cache = nullptr) {
  if (x.rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (d < 2) throw std::invalid_argument("layer_norm: trailing dim must be >= 2");
  if (gamma.size() != d || beta.size() != d) throw std::invalid_argument("layer_norm: affine size mismatch");
  const std::size_t rows = x.size() / d;
  Tensor<T> y(x.shape());
  if (cache) {
    cache->normalized = Tensor<T>(x.shape());
    cache->rstd.assign(rows, T{0});
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    T* yr = y.ptr() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T n = (xr[j] - mean) * rstd;
      if (cache) cache->normalized[r * d + j] = n;
      yr[j] = gamma[j] * n + beta[j];
    }
    if (cache) cache->rstd[r] = rstd;
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm_backward(const LayerNormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& dy,
                              Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const std::size_t d = gamma.size();
  const std::size_t rows = dy.size() / d;
  Tensor<T> dx(dy.shape());
  std::vector<T> dn(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dyr = dy.ptr() + r * d;
    const T* nr = cache.normalized.ptr() + r * d;
    T sum_dn{0}, sum_dn_n{0};
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += dyr[j] * nr[j];
      dbeta[j] += dyr[j];
      dn[j] = dyr[j] * gamma[j];
      sum_dn += dn[j];
      sum_dn_n += dn[j] * nr[j];
    }
    const T scale = cache.rstd[r] / static_cast<T>(d);
    T* dxr = dx.ptr() + r * d;
    for (std::size_t j = 0; j < d; ++j)
      dxr[j] = scale * (static_cast<T>(d) * dn[j] - sum_dn - nr[j] * sum_dn_n);
  }
  return dx;
}

// ---------------------------------------------------------------- softmax

template <typename T>
void softmax_rows(T* data, std::size_t rows, std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = data + r * d;
    const T mx = *std::max_element(row, row + d);
    T sum{0};
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) row[j] /= sum;
  }
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() == 0) throw std::invalid_argument("softmax: scalar input");
  Tensor<T> y = x;
  const std::size_t d = x.shape().back();
  softmax_rows(y.ptr(), y.size() / d, d);
  return y;
}

// dx = y * (dy - <y, dy>) per row.
template <typename T>
void softmax_backward_rows(const T* y, const T* dy, T* dx, std::size_t rows, std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    T dot{0};
    for (std::size_t j = 0; j < d; ++j) dot += y[r * d + j] * dy[r * d + j];
    for (std::size_t j = 0; j < d; ++j) dx[r * d + j] = y[r * d + j] * (dy[r * d + j] - dot);
  }
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  const std::size_t d = y.shape().back();
  softmax_backward_rows(y.ptr(), dy.ptr(), dx.ptr(), y.size() / d, d);
  return dx;
}

// ---------------------------------------------------------------- dropout

// Inverted dropout. `mask` (optional) receives the per-element multiplier.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, RngStream& rng, bool training, Tensor<T>* mask = nullptr) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || p == 0.0) {
    if (mask) *mask = Tensor<T>(x.shape(), T{1});
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> m(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.uniform() < p ? T{0} : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

// ---------------------------------------------------------------- mse

template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  if (pred.empty()) throw std::invalid_argument("mse_loss: empty input");
  T acc{0};
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return acc / static_cast<T>(pred.size());
}

template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& pred, const Tensor<T>& target) {
  Tensor<T> g(pred.shape());
  const T scale = T{2} / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

}  // namespace gaitphase::ops
