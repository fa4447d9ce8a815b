#pragma once

// Cross-validated experiment grid: algorithms x lookbacks x seeds on a
// synthetic subject pool, with per-run metric files, a results table and a
// paired significance table.

#include "gaitphase/data/generator.hpp"
#include "gaitphase/data/splits.hpp"
#include "gaitphase/pretrain/pretrain.hpp"
#include "gaitphase/train/evaluate.hpp"
#include "gaitphase/train/finetune.hpp"
#include "gaitphase/train/stats.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace gaitphase {

struct DatasetConfig {
  std::size_t subjects = 10;
  std::uint64_t seed = 1;
  GeneratorConfig generator;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetConfig, subjects, seed, generator)

// Subject ids 0..n-1, each from the shared data seed.
inline std::vector<Recording> make_subjects(const DatasetConfig& cfg) {
  if (cfg.subjects < kFolds) throw std::invalid_argument("dataset: need at least 5 subjects for cross-validation");
  std::vector<Recording> out;
  out.reserve(cfg.subjects);
  for (std::size_t s = 0; s < cfg.subjects; ++s)
    out.push_back(synthesize_recording(cfg.generator, static_cast<int>(s), cfg.seed));
  return out;
}

// tctst_pt: pre-trained then fine-tuned TCTST; tctst: same network from
// scratch; tctst_mlp / tctst_patch: embedding variants from scratch;
// patchtst: patch-token baseline.
inline const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> names{"tctst_pt", "tctst", "tctst_mlp", "tctst_patch", "patchtst"};
  return names;
}

inline void check_algorithm(const std::string& algo) {
  const auto& k = known_algorithms();
  if (std::find(k.begin(), k.end(), algo) == k.end())
    throw std::invalid_argument("unknown algorithm " + algo + " (expected tctst_pt, tctst, tctst_mlp, tctst_patch or patchtst)");
}

enum class FoldMode { All, Rotate };

NLOHMANN_JSON_SERIALIZE_ENUM(FoldMode, {{FoldMode::All, "all"}, {FoldMode::Rotate, "rotate"}})

struct ExperimentConfig {
  std::string profile = "paper";
  DatasetConfig dataset;
  TctstConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  std::size_t val_stride = 1;
  std::size_t eval_batch = 256;
  std::vector<std::string> algorithms = known_algorithms();
  std::vector<std::size_t> lookbacks{50, 100, 150, 200};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  // all: every seed runs all 5 folds. rotate: seed s runs fold (s - 1) mod 5,
  // so 5 consecutive seeds test every subject once.
  FoldMode fold_mode = FoldMode::All;

  static ExperimentConfig paper() { return {}; }

  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.profile = "desk";
    c.model = TctstConfig::desk();
    c.pretrain.fit = {30, 10, 64, 20, {2, 0.2, 5, 0.1}, {1e-3, 0.9, 0.999, 1e-8}};
    c.finetune.window_stride = 2;
    c.finetune.fit = {30, 10, 64, 20, {2, 0.2, 5, 0.1}, {1e-3, 0.9, 0.999, 1e-8}};
    c.val_stride = 10;
    c.fold_mode = FoldMode::Rotate;
    return c;
  }

  static ExperimentConfig named(const std::string& profile) {
    if (profile == "paper") return paper();
    if (profile == "desk") return desk();
    throw std::invalid_argument("unknown profile " + profile + " (expected desk or paper)");
  }

  void validate() const {
    for (const auto& a : algorithms) check_algorithm(a);
    if (lookbacks.empty() || seeds.empty() || algorithms.empty())
      throw std::invalid_argument("experiment: algorithms, lookbacks and seeds must be non-empty");
    if (val_stride == 0 || eval_batch == 0 || finetune.window_stride == 0)
      throw std::invalid_argument("experiment: strides and batch sizes must be positive");
    for (auto lb : lookbacks) {
      TctstConfig m = model;
      m.lookback = lb;
      m.validate();
      pretrain.validate(m);
    }
  }

  std::vector<std::size_t> folds_for(std::uint64_t seed) const {
    if (fold_mode == FoldMode::Rotate) return {static_cast<std::size_t>((seed + kFolds - 1) % kFolds)};
    std::vector<std::size_t> all(kFolds);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentConfig, profile, dataset, model, pretrain, finetune,
                                                val_stride, eval_batch, algorithms, lookbacks, seeds, fold_mode)

// Seeds of one (run seed, fold): the model initialisation and the
// fine-tuning stream are shared by every algorithm, so pre-trained and
// from-scratch runs differ only in the transferred weights.
struct FoldSeeds {
  std::uint64_t init = 0;
  std::uint64_t finetune = 0;
  std::uint64_t pretrain = 0;
};

inline FoldSeeds fold_seeds(std::uint64_t seed, std::size_t fold) {
  const RngStream root = RngStream(seed).fork(1000 + fold);
  return {root.fork(1).next_u64(), root.fork(2).next_u64(), root.fork(3).next_u64()};
}

inline std::vector<const Recording*> pick(const std::vector<Recording>& recs, const std::vector<int>& ids) {
  std::vector<const Recording*> out;
  for (int id : ids) {
    auto it = std::find_if(recs.begin(), recs.end(), [&](const Recording& r) { return r.subject_id == id; });
    if (it == recs.end()) throw std::invalid_argument("experiment: no recording for subject " + std::to_string(id));
    out.push_back(&*it);
  }
  return out;
}

inline std::vector<int> subject_ids(const std::vector<Recording>& recs) {
  std::vector<int> ids;
  for (const auto& r : recs) ids.push_back(r.subject_id);
  return ids;
}

struct FoldOutcome {
  std::size_t fold = 0;
  Fold split;
  FoldSeeds seeds;
  FitResult finetune;
  std::optional<FitResult> pretrain;
  RunResult result;
  Checkpoint checkpoint;
};

template <typename T, typename Model>
FoldOutcome finish_fold(Model& model, const ExperimentConfig& cfg, const std::vector<Recording>& recs, const Fold& split,
                        const NormStats& stats, const FoldSeeds& seeds, std::ostream* log) {
  const auto train = make_dataset(pick(recs, split.train), model.config().lookback, cfg.finetune.window_stride, false, stats);
  const auto val = make_dataset(pick(recs, split.val), model.config().lookback, cfg.val_stride, false, stats);
  auto ft = finetune<T>(model, train, val, cfg.finetune, seeds.finetune, log);
  FoldOutcome out;
  out.split = split;
  out.seeds = seeds;
  out.finetune = std::move(ft.fit);
  out.checkpoint = std::move(ft.checkpoint);
  out.result = evaluate_model<T>(model, pick(recs, split.test), stats, {cfg.eval_batch, false});
  return out;
}

// One fold of one algorithm. Normalisation statistics and pre-training use
// the training subjects only (pre-training validates on the validation
// subject); test subjects are touched only by the final evaluation.
template <typename T = float>
FoldOutcome run_fold(const std::string& algo, std::size_t lookback, const std::vector<Recording>& recs,
                     std::size_t fold, const ExperimentConfig& cfg, std::uint64_t seed, std::ostream* log = nullptr) {
  check_algorithm(algo);
  const auto folds = loocv_splits(subject_ids(recs));
  if (fold >= folds.size()) throw std::invalid_argument("experiment: fold index out of range");
  const Fold& split = folds[fold];
  const FoldSeeds seeds = fold_seeds(seed, fold);
  const NormStats stats = fit_norm_stats(pick(recs, split.train));

  TctstConfig mc = cfg.model;
  mc.lookback = lookback;
  FoldOutcome out;
  if (algo == "patchtst") {
    PatchTstModel<T> model(mc, seeds.init);
    out = finish_fold<T>(model, cfg, recs, split, stats, seeds, log);
  } else {
    if (algo == "tctst_mlp") mc.embedding = EmbeddingKind::Mlp;
    if (algo == "tctst_patch") mc.embedding = EmbeddingKind::Patch;
    TctstModel<T> model(mc, seeds.init);
    std::optional<FitResult> pre;
    if (algo == "tctst_pt") {
      const bool phase = cfg.pretrain.include_phase_channels;
      const auto ptrain = make_dataset(pick(recs, split.train), lookback, cfg.pretrain.window_stride, phase, stats);
      const auto pval = make_dataset(pick(recs, split.val), lookback, cfg.pretrain.window_stride, phase, stats);
      auto pr = pretrain_run<T>(ptrain, pval, mc, cfg.pretrain, seeds.pretrain, log);
      transfer_weights(pr.checkpoint, model);
      pre = std::move(pr.fit);
    }
    out = finish_fold<T>(model, cfg, recs, split, stats, seeds, log);
    out.pretrain = std::move(pre);
  }
  out.fold = fold;
  return out;
}

struct SeedRun {
  std::string algorithm;
  std::size_t lookback = 0;
  std::uint64_t seed = 0;
  std::vector<FoldOutcome> folds;
  RunResult result;  // test samples of every fold run
};

template <typename T = float>
SeedRun run_seed(const std::string& algo, std::size_t lookback, std::uint64_t seed, const std::vector<Recording>& recs,
                 const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  SeedRun run{algo, lookback, seed, {}, {}};
  for (std::size_t k : cfg.folds_for(seed)) {
    run.folds.push_back(run_fold<T>(algo, lookback, recs, k, cfg, seed, log));
    run.result.merge(run.folds.back().result);
  }
  return run;
}

inline nlohmann::json curve_json(const FitResult& f) {
  nlohmann::json j{{"best_epoch", f.best_epoch}, {"best_val", f.best_val}, {"early_stopped", f.early_stopped}};
  for (const auto& e : f.history) {
    j["train_loss"].push_back(e.train_loss);
    j["val_loss"].push_back(e.val_loss);
  }
  return j;
}

// Everything in here is a function of config and seed (no wall times).
inline nlohmann::json run_json(const SeedRun& run, const ExperimentConfig& cfg) {
  nlohmann::json j{{"algorithm", run.algorithm},
                   {"lookback", run.lookback},
                   {"seed", run.seed},
                   {"config", cfg},
                   {"metrics", run.result.to_json()}};
  for (const auto& f : run.folds) {
    nlohmann::json fj{{"fold", f.fold},
                      {"train", f.split.train},
                      {"val", f.split.val},
                      {"test", f.split.test},
                      {"init_seed", f.seeds.init},
                      {"finetune_seed", f.seeds.finetune},
                      {"finetune", curve_json(f.finetune)}};
    if (f.pretrain) fj["pretrain"] = curve_json(*f.pretrain);
    j["folds"].push_back(fj);
  }
  return j;
}

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_group_csv(std::ostream& out, const RunResult& r) {
  out << "subject,tag,count,phase_rmse,phase_rmse_naive,rate_mae\n";
  for (const auto& [key, g] : r.groups) {
    const Metrics m = r.group(key.first, key.second);
    out << key.first << ',' << key.second << ',' << m.count << ',' << csv_number(m.phase_rmse) << ','
        << csv_number(m.phase_rmse_naive) << ',' << csv_number(m.rate_mae) << '\n';
  }
}

inline std::string run_stem(const std::string& algo, std::size_t lookback, std::uint64_t seed) {
  return algo + "_" + std::to_string(lookback) + "_" + std::to_string(seed);
}

// Per-subject phase RMSE averaged over the seeds that tested the subject.
inline std::map<int, double> subject_rmse(const std::vector<const SeedRun*>& runs) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto* r : runs)
    for (int s : r->result.subjects()) {
      auto& [sum, n] = acc[s];
      sum += r->result.subject(s).phase_rmse;
      ++n;
    }
  std::map<int, double> out;
  for (const auto& [s, v] : acc) out[s] = v.first / static_cast<double>(v.second);
  return out;
}

struct ResultRow {
  std::string algorithm;
  std::size_t lookback = 0;
  std::size_t runs = 0;
  Metrics subject_mean;       // averaged over seeds
  Metrics pooled;             // averaged over seeds
  double subject_mean_sd = 0.0;  // of the per-seed subject-mean phase RMSE
  double stable_rmse = 0.0;
  double transition_rmse = 0.0;
};

inline ResultRow summarize_runs(const std::string& algo, std::size_t lookback, const std::vector<const SeedRun*>& runs) {
  ResultRow row{algo, lookback, runs.size(), {}, {}, 0.0, 0.0, 0.0};
  std::vector<double> per_seed;
  for (const auto* r : runs) {
    const Metrics sm = r->result.subject_mean(), pm = r->result.pooled();
    per_seed.push_back(sm.phase_rmse);
    row.subject_mean.count += sm.count;
    row.subject_mean.phase_rmse += sm.phase_rmse;
    row.subject_mean.phase_rmse_naive += sm.phase_rmse_naive;
    row.subject_mean.rate_mae += sm.rate_mae;
    row.pooled.count += pm.count;
    row.pooled.phase_rmse += pm.phase_rmse;
    row.pooled.phase_rmse_naive += pm.phase_rmse_naive;
    row.pooled.rate_mae += pm.rate_mae;
    row.stable_rmse += r->result.subject_mean(Condition::Stable).phase_rmse;
    row.transition_rmse += r->result.subject_mean(Condition::Transition).phase_rmse;
  }
  const double n = static_cast<double>(runs.size());
  for (Metrics* m : {&row.subject_mean, &row.pooled}) {
    m->phase_rmse /= n;
    m->phase_rmse_naive /= n;
    m->rate_mae /= n;
  }
  row.stable_rmse /= n;
  row.transition_rmse /= n;
  if (runs.size() > 1) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - row.subject_mean.phase_rmse) * (v - row.subject_mean.phase_rmse);
    row.subject_mean_sd = std::sqrt(ss / (n - 1.0));
  }
  return row;
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "algorithm,lookback,runs,phase_rmse_subject_mean,phase_rmse_subject_mean_sd,rate_mae_subject_mean,"
         "phase_rmse_pooled,rate_mae_pooled,phase_rmse_stable,phase_rmse_transition\n";
  for (const auto& r : rows)
    out << r.algorithm << ',' << r.lookback << ',' << r.runs << ',' << csv_number(r.subject_mean.phase_rmse) << ','
        << csv_number(r.subject_mean_sd) << ',' << csv_number(r.subject_mean.rate_mae) << ','
        << csv_number(r.pooled.phase_rmse) << ',' << csv_number(r.pooled.rate_mae) << ','
        << csv_number(r.stable_rmse) << ',' << csv_number(r.transition_rmse) << '\n';
}

struct SignificanceRow {
  std::size_t lookback = 0;
  std::string reference;
  std::string baseline;
  std::optional<TTestReport> test;  // empty when the test is undefined
  std::string note;
};

inline void write_significance_csv(std::ostream& out, const std::vector<SignificanceRow>& rows) {
  out << "lookback,reference,baseline,n,mean_diff,t,df,p,stars\n";
  for (const auto& r : rows) {
    out << r.lookback << ',' << r.reference << ',' << r.baseline << ',';
    if (r.test)
      out << r.test->n << ',' << csv_number(r.test->mean_diff) << ',' << csv_number(r.test->t) << ',' << r.test->df
          << ',' << csv_number(r.test->p) << ',' << r.test->stars << '\n';
    else
      out << ",,,,," << r.note << '\n';
  }
}

struct MatrixResult {
  std::vector<SeedRun> runs;
  std::vector<ResultRow> rows;
  std::vector<SignificanceRow> significance;
};

// Paired tests of the reference algorithm against every other one, per
// lookback, over subjects tested by both.
inline std::vector<SignificanceRow> significance_table(const std::vector<SeedRun>& runs, const std::string& reference,
                                                       const std::vector<std::string>& algorithms,
                                                       const std::vector<std::size_t>& lookbacks) {
  auto select = [&](const std::string& algo, std::size_t lb) {
    std::vector<const SeedRun*> out;
    for (const auto& r : runs)
      if (r.algorithm == algo && r.lookback == lb) out.push_back(&r);
    return out;
  };
  std::vector<SignificanceRow> rows;
  for (auto lb : lookbacks) {
    const auto ref = subject_rmse(select(reference, lb));
    for (const auto& algo : algorithms) {
      if (algo == reference) continue;
      const auto base = subject_rmse(select(algo, lb));
      std::vector<double> a, b;
      for (const auto& [s, v] : ref)
        if (auto it = base.find(s); it != base.end()) {
          a.push_back(v);
          b.push_back(it->second);
        }
      SignificanceRow row{lb, reference, algo, std::nullopt, ""};
      try {
        row.test = paired_t_test(a, b);
      } catch (const std::invalid_argument& e) {
        row.note = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// Runs the grid, writing {algo}_{LB}_{seed}.json/.csv per run plus
// results.csv and significance.csv into `out_dir` (when not empty).
template <typename T = float>
MatrixResult run_matrix(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {},
                        std::ostream* progress = nullptr) {
  cfg.validate();
  const auto recs = make_subjects(cfg.dataset);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  MatrixResult m;
  for (const auto& algo : cfg.algorithms)
    for (auto lb : cfg.lookbacks)
      for (auto seed : cfg.seeds) {
        std::ofstream log;
        if (!out_dir.empty()) log.open(out_dir / (run_stem(algo, lb, seed) + ".log.jsonl"));
        m.runs.push_back(run_seed<T>(algo, lb, seed, recs, cfg, log.is_open() ? &log : nullptr));
        const auto& run = m.runs.back();
        if (progress)
          *progress << run_stem(algo, lb, seed) << " phase_rmse " << run.result.subject_mean().phase_rmse << '\n'
                    << std::flush;
        if (!out_dir.empty()) {
          std::ofstream(out_dir / (run_stem(algo, lb, seed) + ".json")) << run_json(run, cfg).dump(2) << '\n';
          std::ofstream csv(out_dir / (run_stem(algo, lb, seed) + ".csv"));
          write_group_csv(csv, run.result);
        }
      }
  for (const auto& algo : cfg.algorithms)
    for (auto lb : cfg.lookbacks) {
      std::vector<const SeedRun*> sel;
      for (const auto& r : m.runs)
        if (r.algorithm == algo && r.lookback == lb) sel.push_back(&r);
      m.rows.push_back(summarize_runs(algo, lb, sel));
    }
  const bool has_ref = std::find(cfg.algorithms.begin(), cfg.algorithms.end(), "tctst_pt") != cfg.algorithms.end();
  if (has_ref) m.significance = significance_table(m.runs, "tctst_pt", cfg.algorithms, cfg.lookbacks);
  if (!out_dir.empty()) {
    std::ofstream results(out_dir / "results.csv");
    write_results_csv(results, m.rows);
    std::ofstream sig(out_dir / "significance.csv");
    write_significance_csv(sig, m.significance);
  }
  return m;
}

}  // namespace gaitphase
