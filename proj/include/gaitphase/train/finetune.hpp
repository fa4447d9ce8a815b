#pragma once

// Supervised phase-state regression on windows with zeroed phase rows.

#include "gaitphase/data/windows.hpp"
#include "gaitphase/model/checkpoint.hpp"
#include "gaitphase/model/tctst.hpp"
#include "gaitphase/train/fit.hpp"

namespace gaitphase {

struct FinetuneConfig {
  std::size_t window_stride = 1;
  FitConfig fit{100, 20, 1024, 0, {}, {}};
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FinetuneConfig, window_stride, fit)

inline std::string model_kind(const TctstModel<float>&) { return "tctst"; }
inline std::string model_kind(const TctstModel<double>&) { return "tctst"; }
inline std::string model_kind(const PatchTstModel<float>&) { return "patchtst"; }
inline std::string model_kind(const PatchTstModel<double>&) { return "patchtst"; }

// Mean squared error over every element of [B, 3]; grad = d loss / d pred.
template <typename T>
double phase_vector_mse(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr) {
  if (pred.shape() != target.shape()) throw std::invalid_argument("phase loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  if (grad) *grad = Tensor<T>(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += e * e;
    if (grad) (*grad)[i] = static_cast<T>(2.0 * e / n);
  }
  return acc / n;
}

// Mean loss of the model (eval mode) over a dataset.
template <typename T, typename Model>
double dataset_loss(const Model& model, const WindowDataset& data, std::size_t batch_size) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - i));
    std::iota(idx.begin(), idx.end(), i);
    auto [x, y] = data.batch<T>(idx);
    sum += phase_vector_mse(model.predict(x), y) * static_cast<double>(idx.size());
  }
  return sum / static_cast<double>(data.size());
}

template <typename Model>
Checkpoint make_checkpoint(const Model& model, const NormStats& norm, nlohmann::json seeds, nlohmann::json extra = {}) {
  Checkpoint ck;
  ck.kind = model_kind(model);
  ck.config = {{"model", model.config()}};
  ck.norm = norm;
  ck.seeds = std::move(seeds);
  ck.extra = extra.is_null() ? nlohmann::json::object() : std::move(extra);
  ck.params = capture_parameters(model);
  return ck;
}

struct FinetuneResult {
  Checkpoint checkpoint;
  FitResult fit;
};

// Trains `model` in place; on return it holds the best-validation weights.
template <typename T, typename Model>
FinetuneResult finetune(Model& model, const WindowDataset& train, const WindowDataset& val, const FinetuneConfig& cfg,
                        std::uint64_t seed, std::ostream* log = nullptr) {
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("finetune: empty dataset");
  for (const auto& s : train.sets)
    if (s.phase_channels) throw std::invalid_argument("finetune: phase rows must be zero during fine-tuning");
  const RngStream root(seed);
  RngStream shuffle_rng = root.fork(1);
  RngStream dropout_rng = root.fork(2);
  auto params = parameter_list<T>(model);
  Adam<T> adam(cfg.fit.adam);

  auto train_epoch = [&](std::size_t, double factor) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& idx : make_batches(train.size(), cfg.fit.batch_size, shuffle_rng, cfg.fit.max_batches_per_epoch)) {
      auto [x, y] = train.batch<T>(idx);
      zero_grad(model);
      Tensor<T> grad;
      const double loss = phase_vector_mse(model.forward(x, &dropout_rng), y, &grad);
      check_loss(loss, "finetune");
      model.backward(grad);
      adam.step(params, factor);
      sum += loss * static_cast<double>(idx.size());
      n += idx.size();
    }
    return sum / static_cast<double>(n);
  };
  auto validate = [&] { return dataset_loss<T>(model, val, cfg.fit.batch_size); };

  FinetuneResult res;
  std::vector<Tensor<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.push_back(p->value);
  };
  snapshot();
  res.fit = fit(cfg.fit, train_epoch, validate, snapshot, log, "finetune");
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  res.checkpoint = make_checkpoint(model, train.stats, {{"seed", seed}},
                                   {{"best_epoch", res.fit.best_epoch},
                                    {"best_val_loss", res.fit.best_val},
                                    {"early_stopped", res.fit.early_stopped}});
  return res;
}

}  // namespace gaitphase
