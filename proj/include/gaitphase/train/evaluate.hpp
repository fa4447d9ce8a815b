#pragma once

// Causal per-sample evaluation, grouped by (subject, terrain tag).

#include "gaitphase/data/windows.hpp"
#include "gaitphase/phase.hpp"

#include "json.hpp"

#include <map>

namespace gaitphase {

struct Metrics {
  std::size_t count = 0;
  double phase_rmse = 0.0;        // percent, wrap-aware
  double phase_rmse_naive = 0.0;  // percent, no wrap handling
  double rate_mae = 0.0;          // percent
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Metrics, count, phase_rmse, phase_rmse_naive, rate_mae)

inline Metrics compute_metrics(std::span<const PhaseState> pred, std::span<const PhaseState> truth) {
  return {pred.size(), phase_rmse(pred, truth), phase_rmse_naive(pred, truth), rate_mae(pred, truth)};
}

// Decoded predictions and truths of one (subject, tag) group.
struct GroupSamples {
  std::vector<PhaseState> pred;
  std::vector<PhaseState> truth;
};

enum class Condition { All, Stable, Transition };

inline bool matches(Condition c, const std::string& tag) {
  return c == Condition::All || (c == Condition::Transition) == is_transition_tag(tag);
}

inline std::string_view condition_name(Condition c) {
  return c == Condition::All ? "all" : c == Condition::Stable ? "stable" : "transition";
}

struct RunResult {
  std::map<std::pair<int, std::string>, GroupSamples> groups;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, g] : groups) n += g.pred.size();
    return n;
  }

  std::vector<int> subjects() const {
    std::vector<int> out;
    for (const auto& [k, g] : groups)
      if (out.empty() || out.back() != k.first) out.push_back(k.first);
    return out;
  }

  Metrics group(int subject, const std::string& tag) const { return metrics_of(groups.at({subject, tag})); }

  // All samples of one subject restricted to a condition; count 0 if none.
  Metrics subject(int subject, Condition cond = Condition::All) const {
    GroupSamples merged;
    for (const auto& [k, g] : groups)
      if (k.first == subject && matches(cond, k.second)) append(merged, g);
    return metrics_of(merged);
  }

  // Every sample pooled.
  Metrics pooled(Condition cond = Condition::All) const {
    GroupSamples merged;
    for (const auto& [k, g] : groups)
      if (matches(cond, k.second)) append(merged, g);
    return metrics_of(merged);
  }

  // Unweighted mean of per-subject metrics (subjects without samples in the
  // condition are skipped).
  Metrics subject_mean(Condition cond = Condition::All) const {
    Metrics m;
    std::size_t n = 0;
    for (int s : subjects()) {
      const auto sm = subject(s, cond);
      if (sm.count == 0) continue;
      m.count += sm.count;
      m.phase_rmse += sm.phase_rmse;
      m.phase_rmse_naive += sm.phase_rmse_naive;
      m.rate_mae += sm.rate_mae;
      ++n;
    }
    if (n) {
      m.phase_rmse /= static_cast<double>(n);
      m.phase_rmse_naive /= static_cast<double>(n);
      m.rate_mae /= static_cast<double>(n);
    }
    return m;
  }

  void merge(const RunResult& other) {
    for (const auto& [k, g] : other.groups) append(groups[k], g);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [k, g] : groups)
      j["groups"].push_back({{"subject", k.first}, {"tag", k.second}, {"metrics", metrics_of(g)}});
    for (int s : subjects())
      for (auto c : {Condition::All, Condition::Stable, Condition::Transition})
        j["subjects"].push_back({{"subject", s}, {"condition", condition_name(c)}, {"metrics", subject(s, c)}});
    for (auto c : {Condition::All, Condition::Stable, Condition::Transition}) {
      j["subject_mean"][std::string(condition_name(c))] = subject_mean(c);
      j["pooled"][std::string(condition_name(c))] = pooled(c);
    }
    return j;
  }

 private:
  static void append(GroupSamples& dst, const GroupSamples& src) {
    dst.pred.insert(dst.pred.end(), src.pred.begin(), src.pred.end());
    dst.truth.insert(dst.truth.end(), src.truth.begin(), src.truth.end());
  }
  static Metrics metrics_of(const GroupSamples& g) {
    if (g.pred.empty()) return {};
    return compute_metrics(g.pred, g.truth);
  }
};

struct EvalOptions {
  std::size_t batch_size = 256;
  // Diagnostic only: feed the true phase rows (used to exercise the metric
  // path with an oracle predictor).
  bool include_phase_channels = false;
};

// predict: Tensor<T>[B, 24, L_B] -> Tensor<T>[B, 3]. Every sample n >= L_B-1
// of every recording is scored from the window ending at n.
template <typename T, typename Predict>
RunResult evaluate(Predict&& predict, const std::vector<const Recording*>& test, std::size_t lookback,
                   const NormStats& stats, const EvalOptions& opt = {}) {
  RunResult res;
  for (const auto* rec : test) {
    if (rec->length() < lookback)
      throw std::invalid_argument("evaluate: recording of subject " + std::to_string(rec->subject_id) +
                                  " is shorter than the lookback");
    const WindowDataset data = make_dataset({rec}, lookback, 1, opt.include_phase_channels, stats);
    for (std::size_t i = 0; i < data.size(); i += opt.batch_size) {
      std::vector<std::size_t> idx(std::min(opt.batch_size, data.size() - i));
      std::iota(idx.begin(), idx.end(), i);
      auto [x, y] = data.template batch<T>(idx);
      const Tensor<T> out = predict(x);
      if (out.rank() != 2 || out.dim(0) != idx.size() || out.dim(1) != 3)
        throw std::runtime_error("evaluate: predictor returned " + shape_str(out.shape()));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const PhaseVector g{{static_cast<double>(out.at(b, 0)), static_cast<double>(out.at(b, 1)),
                             static_cast<double>(out.at(b, 2))}};
        auto& grp = res.groups[{rec->subject_id, data.tag(idx[b])}];
        grp.pred.push_back(decode_polar(g));
        grp.truth.push_back(rec->phase_truth[data.sets[0].end(idx[b])]);
      }
    }
  }
  return res;
}

template <typename T, typename Model>
RunResult evaluate_model(const Model& model, const std::vector<const Recording*>& test, const NormStats& stats,
                         const EvalOptions& opt = {}) {
  return evaluate<T>([&](const Tensor<T>& x) { return model.predict(x); }, test, model.config().lookback, stats, opt);
}

}  // namespace gaitphase
