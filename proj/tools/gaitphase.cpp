#include "gaitphase/cli/run_config.hpp"
#include "gaitphase/util/allocator.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace gaitphase;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Common {
  std::string config;
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::string out;
  std::size_t lb = 100;
  std::string data;
  std::size_t fold = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "JSON file merged over the profile defaults")->check(CLI::ExistingFile);
  cmd->add_option("--profile", c.profile, "Hyperparameter scale")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", c.seed, "Run seed");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
}

void add_data(CLI::App* cmd, Common& c) {
  cmd->add_option("--lb", c.lb, "Look-back window length")->check(CLI::IsMember({50, 100, 150, 200}));
  cmd->add_option("--data", c.data, "Dataset directory written by `gen` (default: generate from config)")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--fold", c.fold, "Cross-validation fold")->check(CLI::Range(0, static_cast<int>(kFolds) - 1));
}

RunConfig load(const Common& c) { return load_run_config(c.profile, c.config); }

std::vector<Recording> load_data(const Common& c, const RunConfig& cfg) {
  return c.data.empty() ? make_subjects(cfg.experiment.dataset) : read_dataset_dir(c.data);
}

void write_config(const fs::path& dir, const RunConfig& cfg, nlohmann::json args) {
  fs::create_directories(dir);
  write_json(dir / "config.json", {{"run", cfg}, {"args", std::move(args)}});
}

nlohmann::json common_args(const Common& c) {
  return {{"profile", c.profile}, {"seed", c.seed}, {"lb", c.lb}, {"fold", c.fold}, {"data", c.data}, {"config", c.config}};
}

Fold fold_of(const std::vector<Recording>& recs, std::size_t k) { return loocv_splits(subject_ids(recs)).at(k); }

nlohmann::json fold_json(const Fold& f) { return {{"train", f.train}, {"val", f.val}, {"test", f.test}}; }

int cmd_gen(const Common& c, std::size_t subjects) {
  RunConfig cfg = load(c);
  cfg.experiment.dataset.subjects = subjects;
  cfg.experiment.dataset.seed = c.seed;
  const auto recs = make_subjects(cfg.experiment.dataset);
  write_dataset_dir(c.out, recs, cfg.experiment.dataset);
  write_config(c.out, cfg, common_args(c));
  std::cerr << "wrote " << recs.size() << " recordings to " << c.out << '\n';
  return 0;
}

int cmd_pretrain(const Common& c) {
  const RunConfig cfg = load(c);
  const auto recs = load_data(c, cfg);
  const Fold split = fold_of(recs, c.fold);
  const auto& pc = cfg.experiment.pretrain;
  TctstConfig mc = cfg.experiment.model;
  mc.lookback = c.lb;
  const NormStats stats = fit_norm_stats(pick(recs, split.train));
  const auto train = make_dataset(pick(recs, split.train), c.lb, pc.window_stride, pc.include_phase_channels, stats);
  const auto val = make_dataset(pick(recs, split.val), c.lb, pc.window_stride, pc.include_phase_channels, stats);
  const fs::path out = c.out;
  write_config(out, cfg, common_args(c));
  std::ofstream log(out / "pretrain_log.jsonl");
  const auto res = pretrain_run<float>(train, val, mc, pc, fold_seeds(c.seed, c.fold).pretrain, &log);
  save_checkpoint(out / "checkpoint", res.checkpoint);
  write_json(out / "summary.json", {{"fold", fold_json(split)}, {"extra", res.checkpoint.extra}});
  std::cerr << "pretrain best epoch " << res.fit.best_epoch << " val " << res.fit.best_val << '\n';
  return 0;
}

int cmd_finetune(const Common& c, const std::string& algo, const std::string& from_pretrained) {
  if (algo == "tctst_pt") throw std::invalid_argument("finetune: use --algo tctst with --from-pretrained");
  check_algorithm(algo);
  const RunConfig cfg = load(c);
  const auto recs = load_data(c, cfg);
  const Fold split = fold_of(recs, c.fold);
  const FoldSeeds seeds = fold_seeds(c.seed, c.fold);
  const auto& ex = cfg.experiment;
  TctstConfig mc = ex.model;
  mc.lookback = c.lb;
  if (algo == "tctst_mlp") mc.embedding = EmbeddingKind::Mlp;
  if (algo == "tctst_patch") mc.embedding = EmbeddingKind::Patch;
  std::optional<Checkpoint> pre;
  if (!from_pretrained.empty()) {
    if (algo != "tctst") throw std::invalid_argument("finetune: --from-pretrained needs --algo tctst");
    pre = load_checkpoint(fs::path(from_pretrained) / "checkpoint");
    if (pre->kind != "pretrain") throw std::runtime_error("finetune: " + from_pretrained + " is not a pre-training run");
  }

  const NormStats stats = fit_norm_stats(pick(recs, split.train));
  const auto train = make_dataset(pick(recs, split.train), c.lb, ex.finetune.window_stride, false, stats);
  const auto val = make_dataset(pick(recs, split.val), c.lb, ex.val_stride, false, stats);
  const fs::path out = c.out;
  auto args = common_args(c);
  args["algo"] = algo;
  args["from_pretrained"] = from_pretrained;
  write_config(out, cfg, args);
  std::ofstream log(out / "finetune_log.jsonl");

  auto run = [&](auto& model) {
    std::vector<std::string> moved;
    if (pre) moved = transfer_weights(*pre, model);
    auto res = finetune<float>(model, train, val, ex.finetune, seeds.finetune, &log);
    res.checkpoint.seeds = {{"seed", c.seed}, {"init", seeds.init}, {"finetune", seeds.finetune}};
    res.checkpoint.extra["fold"] = fold_json(split);
    res.checkpoint.extra["transferred"] = moved.size();
    save_checkpoint(out / "checkpoint", res.checkpoint);
    write_json(out / "summary.json", {{"fold", fold_json(split)}, {"extra", res.checkpoint.extra}});
    std::cerr << "finetune best epoch " << res.fit.best_epoch << " val " << res.fit.best_val << '\n';
  };
  if (algo == "patchtst") {
    PatchTstModel<float> model(mc, seeds.init);
    run(model);
  } else {
    TctstModel<float> model(mc, seeds.init);
    run(model);
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt, bool all_subjects) {
  const RunConfig cfg = load(c);
  const auto recs = load_data(c, cfg);
  const Checkpoint ck = load_checkpoint(fs::path(ckpt) / "checkpoint");
  const Fold split = fold_of(recs, c.fold);
  const auto test = all_subjects ? pick(recs, subject_ids(recs)) : pick(recs, split.test);
  const fs::path out = c.out;
  auto args = common_args(c);
  args["checkpoint"] = ckpt;
  args["all_subjects"] = all_subjects;
  write_config(out, cfg, args);
  with_checkpoint_model(ck, [&](const auto& model) {
    const RunResult r = evaluate_model<float>(model, test, ck.norm, {cfg.experiment.eval_batch, false});
    write_json(out / "metrics.json", r.to_json());
    std::ofstream csv(out / "groups.csv");
    write_group_csv(csv, r);
    const Metrics sm = r.subject_mean();
    std::cerr << "phase RMSE " << sm.phase_rmse << " %, rate MAE " << sm.rate_mae << " % (subject mean)\n";
  });
  return 0;
}

TemplateSet templates_for(const RunConfig& cfg, const std::string& path) {
  return path.empty() ? templates_from_generator(cfg.experiment.dataset.generator) : load_templates(path);
}

// Streams IMU rows (columns named as in the recording CSV; `t` and `terrain`
// optional) through the estimator and planner, one output row per input row.
void plan_stream(std::istream& in, std::ostream& out, const Checkpoint& ck, const PlannerConfig& pcfg,
                 const TemplateSet& templates, const std::string& default_terrain) {
  std::string raw;
  if (!std::getline(in, raw)) throw std::runtime_error("plan: empty input");
  const auto names = detail::split_fields(detail::trim_cr(raw));
  auto find = [&](std::string_view n) -> std::optional<std::size_t> {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  };
  std::vector<std::size_t> cols;
  for (std::size_t ch = 0; ch < kImuChannels; ++ch) {
    auto k = find(channel_name(ch));
    if (!k) throw std::runtime_error("plan: missing column '" + channel_name(ch) + "'");
    cols.push_back(*k);
  }
  const auto tcol = find("t");
  const auto terrain_col = find("terrain");

  with_checkpoint_model(ck, [&](const auto& model) {
    using M = std::decay_t<decltype(model)>;
    StreamingEstimator<float, M> est(model, ck.norm, pcfg, template_lookup(templates));
    out << "t,phase_pct,rate_pct,event,target_deg,latency_ms\n";
    std::vector<double> sample(kImuChannels);
    std::size_t line = 1, n = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto l = detail::trim_cr(raw);
      if (l.empty()) continue;
      const auto f = detail::split_fields(l);
      if (f.size() != names.size())
        throw std::runtime_error("plan line " + std::to_string(line) + ": expected " + std::to_string(names.size()) +
                                 " fields");
      for (std::size_t ch = 0; ch < kImuChannels; ++ch)
        sample[ch] = detail::parse_double(f[cols[ch]], line, names[cols[ch]]);
      const std::string terrain = terrain_col ? std::string(f[*terrain_col]) : default_terrain;
      const auto o = est.tick(sample, terrain);
      const double t = tcol ? detail::parse_double(f[*tcol], line, "t") : static_cast<double>(n) / kSampleRate;
      out << num(t) << ',';
      if (o.plan) {
        out << num(100.0 * o.plan->state.phase) << ',' << num(100.0 * o.plan->state.rate) << ','
            << (o.plan->event ? 1 : 0) << ',';
        if (o.plan->target_deg) out << num(*o.plan->target_deg);
      } else {
        out << ",,0,";
      }
      out << ',' << num(o.latency_ms) << '\n';
      ++n;
    }
  });
}

int cmd_plan(const Common& c, const std::string& ckpt, const std::string& templates_path, const std::string& terrain) {
  const RunConfig cfg = load(c);
  const Checkpoint ck = load_checkpoint(fs::path(ckpt) / "checkpoint");
  const TemplateSet templates = templates_for(cfg, templates_path);
  if (c.out.empty()) {
    plan_stream(std::cin, std::cout, ck, cfg.planner, templates, terrain);
    return 0;
  }
  const fs::path out = c.out;
  auto args = common_args(c);
  args["checkpoint"] = ckpt;
  args["templates"] = templates_path;
  args["terrain"] = terrain;
  write_config(out, cfg, args);
  std::ofstream csv(out / "plan.csv");
  plan_stream(std::cin, csv, ck, cfg.planner, templates, terrain);
  return 0;
}

int cmd_bench(const Common& c, const std::string& ckpt, std::optional<std::size_t> samples, bool paced) {
  RunConfig cfg = load(c);
  if (samples) cfg.bench.samples = *samples;
  if (paced) cfg.bench.paced = true;
  const auto recs = load_data(c, cfg);
  const Recording& rec = recs.front();
  const TemplateSet templates = templates_from_generator(cfg.experiment.dataset.generator);
  LatencyReport report;
  if (ckpt.empty()) {
    TctstConfig mc = cfg.experiment.model;
    mc.lookback = c.lb;
    TctstModel<float> model(mc, fold_seeds(c.seed, 0).init);
    report = latency_bench<float>(model, fit_norm_stats(recs), rec, templates, cfg.bench, cfg.planner);
  } else {
    const Checkpoint ck = load_checkpoint(fs::path(ckpt) / "checkpoint");
    with_checkpoint_model(ck, [&](const auto& model) {
      report = latency_bench<float>(model, ck.norm, rec, templates, cfg.bench, cfg.planner);
    });
  }
  const fs::path out = c.out;
  auto args = common_args(c);
  args["checkpoint"] = ckpt;
  write_config(out, cfg, args);
  write_json(out / "latency.json", report);
  std::cerr << "latency median " << report.median_ms << " ms, p99 " << report.p99_ms << " ms, max " << report.max_ms
            << " ms, deadline misses " << report.deadline_misses << "/" << report.samples << '\n';
  return 0;
}

int cmd_matrix(const Common& c, const std::vector<std::string>& algos, const std::vector<std::size_t>& lbs,
               const std::vector<std::uint64_t>& seeds, const std::string& fold_mode) {
  RunConfig cfg = load(c);
  auto& ex = cfg.experiment;
  if (!algos.empty()) ex.algorithms = algos;
  if (!lbs.empty()) ex.lookbacks = lbs;
  if (!seeds.empty()) ex.seeds = seeds;
  if (!fold_mode.empty()) ex.fold_mode = nlohmann::json(fold_mode).get<FoldMode>();
  ex.validate();
  write_config(c.out, cfg, common_args(c));
  run_matrix<float>(ex, c.out, &std::cerr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Gait phase estimation: data generation, pre-training, fine-tuning, evaluation and planning"};
  app.require_subcommand(1);
  Common c;

  auto* gen = app.add_subcommand("gen", "Generate synthetic subject recordings");
  add_common(gen, c);
  std::size_t subjects = 10;
  gen->add_option("--subjects", subjects, "Number of subjects")->check(CLI::Range(1, 1000));

  auto* pre = app.add_subcommand("pretrain", "Masked-channel pre-training on one fold's training subjects");
  add_common(pre, c);
  add_data(pre, c);

  auto* ft = app.add_subcommand("finetune", "Fine-tune (or train from scratch) on one fold");
  add_common(ft, c);
  add_data(ft, c);
  std::string algo = "tctst", from_pre;
  bool from_scratch = false;
  ft->add_option("--algo", algo, "tctst, tctst_mlp, tctst_patch or patchtst");
  auto* fp = ft->add_option("--from-pretrained", from_pre, "Pre-training output directory")->check(CLI::ExistingDirectory);
  ft->add_flag("--from-scratch", from_scratch, "Fresh initialisation (default)")->excludes(fp);

  std::string ckpt;
  auto* ev = app.add_subcommand("eval", "Causal per-sample evaluation of a fine-tuned checkpoint");
  add_common(ev, c);
  add_data(ev, c);
  bool all_subjects = false;
  ev->add_option("--checkpoint", ckpt, "Fine-tuning output directory")->required()->check(CLI::ExistingDirectory);
  ev->add_flag("--all-subjects", all_subjects, "Score every subject instead of the fold's test subjects");

  auto* plan = app.add_subcommand("plan", "Stream IMU CSV from stdin through estimator and planner");
  add_common(plan, c, false);
  std::string templates, terrain = "LW";
  plan->add_option("--checkpoint", ckpt, "Fine-tuning output directory")->required()->check(CLI::ExistingDirectory);
  plan->add_option("--templates", templates, "Template JSON {terrain: [101 angles]}")->check(CLI::ExistingFile);
  plan->add_option("--terrain", terrain, "Terrain label when the input has no terrain column");

  auto* bench = app.add_subcommand("bench", "Per-sample latency of the full streaming loop");
  add_common(bench, c);
  bench->add_option("--lb", c.lb, "Look-back window length")->check(CLI::IsMember({50, 100, 150, 200}));
  bench->add_option("--data", c.data, "Dataset directory")->check(CLI::ExistingDirectory);
  bench->add_option("--checkpoint", ckpt, "Fine-tuning output directory (default: fresh model)")
      ->check(CLI::ExistingDirectory);
  std::optional<std::size_t> samples;
  bool paced = false;
  bench->add_option("--samples", samples, "Measured samples");
  bench->add_flag("--paced", paced, "Sleep to a 100 Hz tick between samples");

  auto* matrix = app.add_subcommand("matrix", "Algorithm x look-back x seed grid with significance tests");
  add_common(matrix, c);
  std::vector<std::string> algos;
  std::vector<std::size_t> lbs;
  std::vector<std::uint64_t> seeds;
  std::string fold_mode;
  matrix->add_option("--algos", algos, "Algorithms")->delimiter(',');
  matrix->add_option("--lbs", lbs, "Look-back lengths")->delimiter(',')->check(CLI::IsMember({50, 100, 150, 200}));
  matrix->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  matrix->add_option("--fold-mode", fold_mode, "all or rotate")->check(CLI::IsMember({"all", "rotate"}));

  auto* show = app.add_subcommand("config", "Print the merged run configuration");
  show->add_option("--config", c.config, "JSON file merged over the profile defaults")->check(CLI::ExistingFile);
  show->add_option("--profile", c.profile, "Hyperparameter scale")->check(CLI::IsMember({"desk", "paper"}));

  auto* tmpl = app.add_subcommand("templates", "Print trajectory templates derived from the generator");
  tmpl->add_option("--config", c.config, "JSON file merged over the profile defaults")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(c, subjects);
    if (pre->parsed()) return cmd_pretrain(c);
    if (ft->parsed()) return cmd_finetune(c, algo, from_pre);
    if (ev->parsed()) return cmd_eval(c, ckpt, all_subjects);
    if (plan->parsed()) return cmd_plan(c, ckpt, templates, terrain);
    if (bench->parsed()) return cmd_bench(c, ckpt, samples, paced);
    if (matrix->parsed()) return cmd_matrix(c, algos, lbs, seeds, fold_mode);
    if (show->parsed()) {
      std::cout << nlohmann::json(load(c)).dump(2) << '\n';
      return 0;
    }
    if (tmpl->parsed()) {
      std::cout << templates_to_json(templates_from_generator(load(c).experiment.dataset.generator)).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
