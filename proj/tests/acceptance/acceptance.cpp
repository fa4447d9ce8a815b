// Acceptance run: one PASS/FAIL line per criterion. Usage:
//   acceptance [--only 1,2,...] [--skip 7] [--results FILE]

#include "gaitphase/model/transformer.hpp"
#include "gaitphase/planner/realtime.hpp"
#include "gaitphase/train/experiment.hpp"
#include "gaitphase/util/allocator.hpp"

#include "support/gradcheck.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>

using namespace gaitphase;
using gaitphase::testing::layer_gradient_error;
using gaitphase::testing::model_gradient_errors;
using gaitphase::testing::numeric_gradient;
using gaitphase::testing::project;
using gaitphase::testing::random_tensor;
using gaitphase::testing::relative_error;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------------ 1

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(101);
  std::vector<std::pair<std::string, double>> layers;

  Linear<double> fc("fc", 5, 4);
  fc.init(rng);
  layers.emplace_back("linear", layer_gradient_error(fc, random_tensor({3, 5}, rng), rng));
  Conv1d<double> conv("conv", 3, 4, 3, 1);
  conv.init(rng);
  layers.emplace_back("conv1d", layer_gradient_error(conv, random_tensor({2, 3, 9}, rng), rng));
  Conv1d<double> strided("conv", 2, 3, 3, 0, 2);
  strided.init(rng);
  layers.emplace_back("conv1d_stride2", layer_gradient_error(strided, random_tensor({2, 2, 11}, rng), rng));
  LayerNorm<double> ln("ln", 6);
  ln.init(rng);
  ln.visit([&](Parameter<double>& p) {
    for (auto& v : p.value.data()) v += rng.uniform(-0.5, 0.5);
  });
  layers.emplace_back("layer_norm", layer_gradient_error(ln, random_tensor({4, 6}, rng), rng));
  MultiHeadAttention<double> attn("attn", 8, 2, true);
  attn.init(rng);
  layers.emplace_back("attention", layer_gradient_error(attn, random_tensor({2, 5, 8}, rng), rng));
  TransformerLayer<double> block("block", 8, 2, 16, true);
  block.init(rng);
  layers.emplace_back("transformer_layer", layer_gradient_error(block, random_tensor({2, 5, 8}, rng), rng));

  {
    Tensor<double> x = random_tensor({3, 5}, rng, -2, 2);
    const Tensor<double> w = random_tensor({3, 5}, rng);
    const auto analytic = ops::softmax_backward(ops::softmax(x), w);
    layers.emplace_back("softmax", relative_error(analytic, numeric_gradient(x, [&] { return project(ops::softmax(x), w); })));
  }
  {
    // Keep inputs away from the kink so central differences are valid.
    Tensor<double> x = random_tensor({4, 6}, rng);
    for (auto& v : x.data()) v += v >= 0 ? 0.1 : -0.1;
    const Tensor<double> w = random_tensor({4, 6}, rng);
    const auto analytic = ops::relu_backward(x, w);
    layers.emplace_back("relu", relative_error(analytic, numeric_gradient(x, [&] { return project(ops::relu(x), w); })));
  }
  {
    Tensor<double> x = random_tensor({2, 3, 8}, rng);
    std::vector<std::uint32_t> arg;
    const auto y = ops::maxpool1d(x, 2, 2, &arg);
    const Tensor<double> w = random_tensor(y.shape(), rng);
    const auto analytic = ops::maxpool1d_backward(x.shape(), arg, w);
    layers.emplace_back("maxpool1d",
                        relative_error(analytic, numeric_gradient(x, [&] { return project(ops::maxpool1d(x, 2, 2), w); })));
  }
  {
    Tensor<double> p = random_tensor({4, 3}, rng);
    const Tensor<double> t = random_tensor({4, 3}, rng);
    layers.emplace_back("mse", relative_error(ops::mse_loss_grad(p, t), numeric_gradient(p, [&] { return ops::mse_loss(p, t); })));
  }

  TctstConfig tiny;
  tiny.channels = 4;
  tiny.lookback = 20;
  tiny.emb_dim = 8;
  tiny.n_head = 2;
  tiny.n_layers = 1;
  tiny.latent_dim = 6;
  tiny.tcn_channels1 = 3;
  tiny.tcn_channels2 = 4;
  TctstModel<double> model(tiny, 102);
  const auto model_errs = model_gradient_errors(model, random_tensor({2, 4, 20}, rng), rng);

  double worst_layer = 0.0, worst_model = 0.0;
  std::string which_layer, which_model;
  for (const auto& [n, e] : layers)
    if (e >= worst_layer) worst_layer = e, which_layer = n;
  for (const auto& [n, e] : model_errs)
    if (e >= worst_model) worst_model = e, which_model = n;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst_layer <= 1e-4 && worst_model <= 1e-3 && secs < 60.0,
          fmt("%zu layer/op checks worst %.2e (%s); %zu tiny-TCTST parameters worst %.2e (%s); %.1f s", layers.size(),
              worst_layer, which_layer.c_str(), model_errs.size(), worst_model, which_model.c_str(), secs)};
}

// ------------------------------------------------------------------ 2

Outcome phase_codec() {
  RngStream rng(201);
  double worst_rt = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const PhaseState s{rng.uniform(), rng.uniform(kMinRate, kMaxRate)};
    const PhaseState back = decode_polar(encode_polar(s));
    worst_rt = std::max({worst_rt, circular_error(back.phase, s.phase), std::fabs(back.rate - s.rate)});
  }
  // Scalar oracles: distance by explicit candidates on the circle.
  double worst_circ = 0.0;
  std::vector<PhaseState> pred, truth;
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    double oracle = 1.0;
    for (double k : {-1.0, 0.0, 1.0}) oracle = std::min(oracle, std::fabs(a - b + k));
    worst_circ = std::max(worst_circ, std::fabs(circular_error(a, b) - oracle));
    pred.push_back({a, 0.01});
    truth.push_back({b, 0.01});
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = 1.0;
    for (double k : {-1.0, 0.0, 1.0}) d = std::min(d, std::fabs(pred[i].phase - truth[i].phase + k));
    acc += d * d;
  }
  const double oracle_rmse = 100.0 * std::sqrt(acc / static_cast<double>(pred.size()));
  const double rmse_err = std::fabs(phase_rmse(pred, truth) - oracle_rmse);
  return {worst_rt <= 1e-9 && worst_circ <= 1e-12 && rmse_err <= 1e-12,
          fmt("roundtrip max %.1e; circular_error max dev %.1e; phase_rmse dev %.1e", worst_rt, worst_circ, rmse_err)};
}

// ------------------------------------------------------------------ 3

Outcome reconstruction_arithmetic() {
  const Tensor<double> recon({1, 2}, {0.0, 0.0});
  const Tensor<double> orig({1, 2}, {1.0, 2.0});
  MaskSpec one;
  one.channels = {0};
  const double hand = reconstruction_loss(recon, orig, one);

  RngStream rng(301);
  int local = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t c = 3 + rng.uniform_int(22), len = 2 + rng.uniform_int(30);
    const auto r = random_tensor({c, len}, rng);
    auto o = random_tensor({c, len}, rng);
    const MaskSpec m = draw_channel_mask(c, 0.3, rng);
    const double before = reconstruction_loss(r, o, m);
    std::set<std::size_t> masked(m.channels.begin(), m.channels.end());
    for (std::size_t ch = 0; ch < c; ++ch)
      if (!masked.count(ch))
        for (std::size_t k = 0; k < len; ++k) o.at(ch, k) += rng.normal(0.0, 10.0);
    if (reconstruction_loss(r, o, m) == before) ++local;
  }
  return {hand == 2.5 && local == 100, fmt("hand example %.17g; locality held in %d/100 cases", hand, local)};
}

// ------------------------------------------------------------------ 4

Outcome masking_cardinality() {
  RngStream rng(401);
  std::vector<std::size_t> freq(kModelChannels, 0);
  const Tensor<float> x({1000, kModelChannels, 4});
  bool exact = true;
  for (int rep = 0; rep < 10; ++rep) {
    const auto [masked, specs] = mask_batch(x, 0.3, 0, rng);
    for (const auto& s : specs) {
      std::set<std::size_t> uniq(s.channels.begin(), s.channels.end());
      exact = exact && s.channels.size() == 7 && uniq.size() == 7;
      for (auto c : s.channels) ++freq[c];
    }
  }
  double lo = 1.0, hi = 0.0;
  for (auto f : freq) {
    lo = std::min(lo, f / 1e4);
    hi = std::max(hi, f / 1e4);
  }
  return {exact && lo >= 0.28 && hi <= 0.32,
          fmt("7 channels per sample: %s; per-channel frequency over 1e4 samples in [%.4f, %.4f]", exact ? "yes" : "no", lo, hi)};
}

// ------------------------------------------------------------------ 5

Outcome schedule_endpoints() {
  const double f0 = lr_factor(0, {}), f20 = lr_factor(20, {}), f10 = lr_factor(10, {});
  const std::vector<double> flat(300, 1.0);
  double floor = 1.0;
  for (int e = 21; e < 300; ++e) floor = std::min(floor, lr_factor(e, flat));
  const bool ok = f0 == 0.2 && f20 == 1.0 && f10 == 0.6 && lr_factor(31, flat) == 0.5 && floor == 0.1;
  return {ok, fmt("factor(0)=%.17g factor(20)=%.17g factor(10)=%.17g; halving floor %.17g", f0, f20, f10, floor)};
}

// ------------------------------------------------------------------ 6

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  GeneratorConfig g;
  g.strides_per_recording = 30;
  const Recording rec = synthesize_recording(g, 0, 601);
  const NormStats stats = fit_norm_stats(std::vector<const Recording*>{&rec});
  const std::size_t stride = (rec.length() - 100) / 255;
  WindowDataset data = make_dataset({&rec}, 100, stride, false, stats);
  std::vector<std::size_t> keep(256);
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  const auto desk = ExperimentConfig::desk();
  TctstModel<float> model(desk.model, 602);
  auto params = parameter_list<float>(model);
  Adam<float> adam(desk.finetune.fit.adam);
  RngStream shuffle(603), dropout(604);
  std::vector<double> history;
  double mse = dataset_loss<float>(model, data, 256);
  std::size_t epoch = 0;
  for (; epoch < 500 && mse >= 1e-3; ++epoch) {
    const double factor = lr_factor(static_cast<int>(epoch), history, desk.finetune.fit.schedule);
    for (const auto& idx : make_batches(256, 64, shuffle)) {
      auto [x, y] = data.batch<float>(idx);
      zero_grad(model);
      Tensor<float> grad;
      phase_vector_mse(model.forward(x, &dropout), y, &grad);
      model.backward(grad);
      adam.step(params, factor);
    }
    mse = dataset_loss<float>(model, data, 256);
    history.push_back(mse);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {data.size() >= 256 && mse < 1e-3 && secs < 600.0,
          fmt("train MSE %.4e after %zu epochs on 256 windows (L_B=100); %.0f s", mse, epoch, secs)};
}

// ------------------------------------------------------------------ 7

Outcome pretraining_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = ExperimentConfig::desk();
  const auto recs = make_subjects(cfg.dataset);
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto pt = run_seed("tctst_pt", 200, seed, recs, cfg);
    const auto sc = run_seed("tctst", 200, seed, recs, cfg);
    if (pt.folds[0].split.test != sc.folds[0].split.test) return {false, "fold assignment differs"};
    const double a = pt.result.subject_mean().phase_rmse, b = sc.result.subject_mean().phase_rmse;
    if (a < b) ++wins;
    per_seed += fmt(" s%llu %.2f/%.2f", static_cast<unsigned long long>(seed), a, b);
    std::cerr << "  criterion 7 seed " << seed << ": pretrained " << a << " %, scratch " << b << " %\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {wins >= 3 && secs < 7200.0,
          fmt("pretrained beats scratch in %d/5 seeds (phase RMSE %%, pt/scratch:%s); %.0f s", wins, per_seed.c_str(), secs)};
}

// ------------------------------------------------------------------ 8

struct Stream {
  std::vector<double> phase;
  std::vector<std::size_t> starts;
};

// Generator stride lengths, preceded by the second half of one stride so the
// first listed start is a wrap.
Stream phase_stream(std::size_t strides, std::uint64_t seed) {
  RngStream rng(seed);
  Stream s;
  const auto head = stride_phase_labels(100);
  for (std::size_t n = 50; n < 100; ++n) s.phase.push_back(head[n].phase);
  for (std::size_t k = 0; k < strides; ++k) {
    s.starts.push_back(s.phase.size());
    for (const auto& p : stride_phase_labels(80 + rng.uniform_int(41))) s.phase.push_back(p.phase);
  }
  return s;
}

Outcome event_detection() {
  const PlannerConfig pc;
  bool oracle_ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = phase_stream(500, seed);
    EventDetector d(pc.refractory, pc.event_smoothing_window);
    for (std::size_t n = 0; n < s.phase.size(); ++n) d.update(n, s.phase[n]);
    oracle_ok = oracle_ok && d.events() == s.starts;
  }
  std::size_t matched = 0, total = 0, dup = 0;
  long worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = phase_stream(500, seed);
    RngStream noise(seed + 800);
    EventDetector d(pc.refractory, pc.event_smoothing_window);
    for (std::size_t n = 0; n < s.phase.size(); ++n) d.update(n, wrap_phase(s.phase[n] + noise.normal(0.0, 0.01)));
    const auto& ev = d.events();
    total += s.starts.size();
    if (ev.size() > s.starts.size()) dup += ev.size() - s.starts.size();
    for (std::size_t k = 0; k < std::min(ev.size(), s.starts.size()); ++k) {
      const long off = std::labs(static_cast<long>(ev[k]) - static_cast<long>(s.starts[k]));
      worst = std::max(worst, off);
      if (off <= 2) ++matched;
    }
  }
  return {oracle_ok && matched == total && dup == 0,
          fmt("oracle streams exact: %s; noisy (sigma 1%%): %zu/%zu strides within +-2 (max offset %ld), %zu duplicates",
              oracle_ok ? "yes" : "no", matched, total, worst, dup)};
}

// ------------------------------------------------------------------ 9

Outcome realtime_budget() {
  const auto desk = ExperimentConfig::desk();
  TctstConfig mc = desk.model;
  mc.lookback = 100;
  TctstModel<float> model(mc, 901);
  GeneratorConfig g;
  g.strides_per_recording = 30;
  const Recording rec = synthesize_recording(g, 0, 902);
  const NormStats stats = fit_norm_stats(std::vector<const Recording*>{&rec});
  BenchOptions opt;
  opt.samples = 1000;
  opt.paced = true;
  const auto r = latency_bench<float>(model, stats, rec, templates_from_generator(g), opt);
  return {r.median_ms < 10.0,
          fmt("desk model (Emb 64, N_T 2, L_B 100, C 24), %zu paced samples: median %.2f ms, p99 %.2f ms, max %.2f ms, "
              "deadline misses %zu",
              r.samples, r.median_ms, r.p99_ms, r.max_ms, r.deadline_misses)};
}

// ------------------------------------------------------------------ 10

Outcome planner_tracking() {
  GeneratorConfig g;
  g.strides_per_recording = 150;
  const Recording rec = synthesize_recording(g, 0, 1001);
  const TemplateSet set = templates_from_generator(g);
  // Wrong terrain: each label maps to the next one in the list.
  auto wrong = [&](const std::string& t) {
    for (std::size_t i = 0; i < kTerrainCount; ++i)
      if (terrain_name(kAllTerrains[i]) == t) return set.at(std::string(terrain_name(kAllTerrains[(i + 1) % kTerrainCount])));
    throw std::invalid_argument("unknown terrain " + t);
  };
  RngStream noise(1002);
  std::vector<double> sensor(rec.length());
  for (std::size_t n = 0; n < rec.length(); ++n)
    sensor[n] = target_angle(set.at(std::string(terrain_name(rec.terrain[n]))), rec.phase_truth[n].phase) +
                noise.normal(0.0, 3.0);

  auto track = [&](TemplateProvider provider) {
    Planner p({}, std::move(provider));
    std::vector<double> planned, measured;
    for (std::size_t n = 0; n + 1 < rec.length(); ++n) {
      const auto out = p.step(encode_polar(rec.phase_truth[n]), std::string(terrain_name(rec.terrain[n])));
      if (!out.target_deg) continue;
      planned.push_back(*out.target_deg);
      measured.push_back(sensor[n + 1]);
    }
    return track_metrics(planned, measured);
  };
  const auto matched = track(template_lookup(set));
  const auto mismatched = track(wrong);
  return {mismatched.rmse_deg > matched.rmse_deg && std::fabs(matched.rmse_deg - 3.0) <= 0.3,
          fmt("matched RMSE %.3f deg (PCC %.3f), mismatched RMSE %.3f deg (PCC %.3f), sensor noise 3 deg",
              matched.rmse_deg, matched.pcc, mismatched.rmse_deg, mismatched.pcc)};
}

// ------------------------------------------------------------------ 11

// Second quadrature: composite Gauss-Legendre (5 points) of the density over
// [0, |t|], p = 1 - 2 * central mass.
double p_by_gauss_legendre(double t, double nu) {
  static const double xs[] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  static const double ws[] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                              0.2369268850561891};
  const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * std::numbers::pi);
  const std::size_t panels = 4000;
  const double h = std::fabs(t) / panels;
  double mass = 0.0;
  for (std::size_t i = 0; i < panels; ++i) {
    const double mid = (i + 0.5) * h;
    for (int k = 0; k < 5; ++k) {
      const double x = mid + 0.5 * h * xs[k];
      mass += 0.5 * h * ws[k] * c * std::pow(1 + x * x / nu, -(nu + 1) / 2);
    }
  }
  return 1.0 - 2.0 * mass;
}

Outcome t_test() {
  const std::vector<double> d{1, 2, 3}, zero{0, 0, 0};
  const auto r = paired_t_test(d, zero);
  double worst = 0.0;
  for (double t : {0.3, 1.0, 2.0, 3.4641016151377544, 5.0, 9.0})
    for (double nu : {2.0, 4.0, 9.0, 29.0}) worst = std::max(worst, std::fabs(t_two_sided_p(t, nu) - p_by_gauss_legendre(t, nu)));
  const bool stars = significance_stars(0.0009) == "***" && significance_stars(0.001) == "**" &&
                     significance_stars(0.0099) == "**" && significance_stars(0.01) == "*" &&
                     significance_stars(0.0499) == "*" && significance_stars(0.05) == "ns";
  const bool ok = std::fabs(r.t - 3.4641) < 5e-5 && r.df == 2 && std::fabs(r.p - 0.0742) < 5e-5 && worst <= 1e-6 && stars;
  return {ok, fmt("t=%.4f df=%zu p=%.4f; max |p - Gauss-Legendre| %.1e over 24 (t, df) pairs; stars %s", r.t, r.df, r.p,
                  worst, stars ? "ok" : "wrong")};
}

// ------------------------------------------------------------------ 12

std::string bytes_of(const std::filesystem::path& dir) {
  std::string all;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && !e.path().string().ends_with(".log.jsonl")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    all += f.filename().string() + '\n' + s.str();
  }
  return all;
}

Outcome determinism() {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = ExperimentConfig::desk();
  cfg.dataset.subjects = 5;
  cfg.dataset.generator.strides_per_recording = 8;
  cfg.model.emb_dim = 16;
  cfg.model.n_head = 2;
  cfg.model.n_layers = 1;
  for (FitConfig* f : {&cfg.pretrain.fit, &cfg.finetune.fit}) {
    f->epochs = 2;
    f->batch_size = 32;
    f->max_batches_per_epoch = 3;
  }
  cfg.finetune.window_stride = 8;
  cfg.val_stride = 10;
  cfg.algorithms = {"tctst_pt", "tctst", "patchtst"};
  cfg.lookbacks = {50};
  cfg.seeds = {1, 2, 3};

  std::vector<std::string> stages;
  auto check = [&](const std::string& name, bool same) {
    if (!same) stages.push_back(name);
  };
  const auto r1 = make_subjects(cfg.dataset), r2 = make_subjects(cfg.dataset);
  bool gen_same = true;
  for (std::size_t i = 0; i < r1.size(); ++i)
    gen_same = gen_same && r1[i].channels.values() == r2[i].channels.values() && r1[i].stride_starts == r2[i].stride_starts;
  check("generator", gen_same);

  const auto split = loocv_splits(subject_ids(r1))[0];
  const NormStats stats = fit_norm_stats(pick(r1, split.train));
  const auto pdata = make_dataset(pick(r1, split.train), 50, 10, true, stats);
  const auto pval = make_dataset(pick(r1, split.val), 50, 10, true, stats);
  TctstConfig mc = cfg.model;
  mc.lookback = 50;
  const auto p1 = pretrain_run<float>(pdata, pval, mc, cfg.pretrain, 7);
  const auto p2 = pretrain_run<float>(pdata, pval, mc, cfg.pretrain, 7);
  const fs::path root = fs::temp_directory_path() / ("gaitphase_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  save_checkpoint(root / "p1", p1.checkpoint);
  save_checkpoint(root / "p2", p2.checkpoint);
  check("pretrain checkpoint", bytes_of(root / "p1") == bytes_of(root / "p2"));

  const auto f1 = run_fold("tctst_pt", 50, r1, 0, cfg, 3), f2 = run_fold("tctst_pt", 50, r1, 0, cfg, 3);
  save_checkpoint(root / "f1", f1.checkpoint);
  save_checkpoint(root / "f2", f2.checkpoint);
  check("finetune checkpoint", bytes_of(root / "f1") == bytes_of(root / "f2"));
  check("evaluation metrics", f1.result.to_json().dump() == f2.result.to_json().dump());

  run_matrix(cfg, root / "m1");
  run_matrix(cfg, root / "m2");
  check("matrix tables", bytes_of(root / "m1") == bytes_of(root / "m2"));
  fs::remove_all(root);
  std::string failed;
  for (const auto& s : stages) failed += " " + s;
  return {stages.empty(), stages.empty() ? "generator, pre-training and fine-tuning checkpoints, evaluation metrics and "
                                           "matrix tables reproduced bit-exactly"
                                         : "differs:" + failed};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"gradient suite", gradient_suite},
      {"phase codec", phase_codec},
      {"reconstruction loss arithmetic and locality", reconstruction_arithmetic},
      {"masking cardinality", masking_cardinality},
      {"schedule endpoints", schedule_endpoints},
      {"overfit check", overfit},
      {"pre-training benefit at L_B=200", pretraining_benefit},
      {"event detection", event_detection},
      {"real-time budget", realtime_budget},
      {"planner tracking", planner_tracking},
      {"t-test", t_test},
      {"determinism", determinism},
  };
  std::set<std::size_t> only, skip;
  std::string results_path;
  auto parse_list = [](const std::string& s, std::set<std::size_t>& out) {
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.insert(std::stoul(item));
  };
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if ((a == "--only" || a == "--skip" || a == "--results") && i + 1 < argc) {
      const std::string v = argv[++i];
      if (a == "--only") parse_list(v, only);
      if (a == "--skip") parse_list(v, skip);
      if (a == "--results") results_path = v;
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--skip 7] [--results FILE]\n";
      return 2;
    }
  }

  std::ofstream results;
  if (!results_path.empty()) results.open(results_path);
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const std::size_t id = k + 1;
    if ((!only.empty() && !only.count(id)) || skip.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    const std::string line =
        fmt("criterion %2zu %s: %s - ", id, o.pass ? "PASS" : "FAIL", criteria[k].first.c_str()) + o.detail;
    std::cout << line << '\n' << std::flush;
    if (results) results << line << '\n' << std::flush;
  }
  return all ? 0 : 1;
}
