#pragma once

// Central finite-difference oracle, independent of every backward pass.

#include "gaitphase/numerics/rng.hpp"
#include "gaitphase/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gaitphase::testing {

inline Tensor<double> random_tensor(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// d loss / d x by central differences with step h, perturbing x in place.
inline Tensor<double> numeric_gradient(Tensor<double>& x, const std::function<double()>& loss, double h = 1e-5) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, 1e-3), Euclidean norms over all elements.
// The floor covers gradients that vanish identically (e.g. key biases under
// softmax shift invariance), where both sides are rounding noise.
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(std::max(na, nb)), 1e-3);
}

// Fixed random projection so the scalar loss depends on every output element.
inline double project(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

// Worst relative error over the input gradient and every parameter gradient
// of a layer, for loss = <layer(x), w> with a random fixed w.
template <typename Layer>
double layer_gradient_error(Layer& layer, Tensor<double> x, RngStream& rng) {
  const Tensor<double> probe = layer.infer(x);
  const Tensor<double> w = random_tensor(probe.shape(), rng);
  layer.visit([](Parameter<double>& p) { p.zero_grad(); });
  layer.forward(x);
  const Tensor<double> dx = layer.backward(w);
  auto loss = [&] { return project(layer.infer(x), w); };
  double worst = relative_error(dx, numeric_gradient(x, loss));
  layer.visit([&](Parameter<double>& p) {
    worst = std::max(worst, relative_error(p.grad, numeric_gradient(p.value, loss)));
  });
  return worst;
}

// Per-parameter relative errors of a model's analytic gradient of
// <model(x), w> (eval-mode forward, so dropout is off).
template <typename Model>
std::vector<std::pair<std::string, double>> model_gradient_errors(Model& model, const Tensor<double>& x, RngStream& rng) {
  const Tensor<double> probe = model.predict(x);
  const Tensor<double> w = random_tensor(probe.shape(), rng);
  model.visit([](Parameter<double>& p) { p.zero_grad(); });
  model.forward(x, nullptr);
  model.backward(w);
  std::vector<std::pair<std::string, double>> out;
  model.visit([&](Parameter<double>& p) {
    out.emplace_back(p.name, relative_error(p.grad, numeric_gradient(p.value, [&] { return project(model.predict(x), w); })));
  });
  return out;
}

}  // namespace gaitphase::testing
