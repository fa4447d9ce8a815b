#include "gaitphase/data/csv.hpp"
#include "gaitphase/data/generator.hpp"
#include "gaitphase/data/masking.hpp"
#include "gaitphase/data/splits.hpp"
#include "gaitphase/data/windows.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace gaitphase;

namespace {

GeneratorConfig small_config(std::size_t strides = 20) {
  GeneratorConfig cfg;
  cfg.strides_per_recording = strides;
  return cfg;
}

Recording single_terrain(std::size_t strides, std::size_t stride_len, Terrain t = Terrain::LW) {
  Recording rec;
  rec.subject_id = 3;
  const std::size_t total = strides * stride_len;
  for (std::size_t s = 0; s < strides; ++s) rec.stride_starts.push_back(s * stride_len);
  rec.terrain.assign(total, t);
  rec.phase_truth = phase_from_strides(rec.stride_starts, total);
  rec.channels = Tensor<double>({kImuChannels, total});
  RngStream rng(5);
  for (auto& v : rec.channels.data()) v = rng.normal(1.0, 2.0);
  return rec;
}

}  // namespace

TEST(Schema, ChannelOrder) {
  EXPECT_EQ(channel_name(0), "L_accx");
  EXPECT_EQ(channel_name(6), "L_pitch");
  EXPECT_EQ(channel_name(7), "R_accx");
  EXPECT_EQ(channel_name(20), "P_pitch");
  EXPECT_EQ(channel_index(Segment::RightThigh, Axis::GyrY), 11u);
  EXPECT_EQ(kModelChannels, 24u);
}

TEST(Generator, Deterministic) {
  const auto cfg = small_config();
  const auto a = synthesize_recording(cfg, 4, 99);
  const auto b = synthesize_recording(cfg, 4, 99);
  EXPECT_EQ(a.channels, b.channels);
  EXPECT_EQ(a.stride_starts, b.stride_starts);
  EXPECT_EQ(a.terrain, b.terrain);
  const auto c = synthesize_recording(cfg, 5, 99);
  EXPECT_NE(a.channels, c.channels);
}

TEST(Generator, StrideLengthsAndLabels) {
  const auto rec = synthesize_recording(small_config(60), 1, 7);
  ASSERT_EQ(rec.stride_starts.size(), 60u);
  for (std::size_t s = 0; s < rec.stride_starts.size(); ++s) {
    const auto len = rec.stride_end(s) - rec.stride_starts[s];
    EXPECT_GE(len, 80u);
    EXPECT_LE(len, 120u);
    for (std::size_t n = rec.stride_starts[s]; n < rec.stride_end(s); ++n)
      EXPECT_EQ(rec.terrain[n], rec.terrain[rec.stride_starts[s]]);
  }
  EXPECT_NO_THROW(validate(rec));
}

TEST(Generator, MinimumDwell) {
  auto cfg = small_config(200);
  cfg.switch_probability = 0.9;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rec = synthesize_recording(cfg, 0, seed);
    std::vector<Terrain> per_stride;
    for (auto s : rec.stride_starts) per_stride.push_back(rec.terrain[s]);
    std::size_t run = 1, changes = 0;
    for (std::size_t i = 1; i <= per_stride.size(); ++i) {
      if (i == per_stride.size() || per_stride[i] != per_stride[i - 1]) {
        EXPECT_GE(run, 3u) << "seed " << seed << " stride " << i;
        run = 1;
        changes += i < per_stride.size();
      } else {
        ++run;
      }
    }
    EXPECT_GT(changes, 10u);
  }
}

// Central difference of the pitch channel against the analytic gyro channel.
// The truncation error is h^2/6 * |theta'''|; the third derivative is bounded
// from the Fourier coefficients of the template in use.
TEST(Generator, GyroIsPitchDerivative) {
  auto cfg = small_config(30);
  cfg.noise_sigma = 0.0;
  const auto rec = synthesize_recording(cfg, 2, 11);
  const double h = 1.0 / kSampleRate;
  const double deg = std::numbers::pi / 180.0;
  std::size_t checked = 0;
  for (std::size_t s = 1; s < rec.stride_starts.size(); ++s) {
    const Terrain here = rec.terrain[rec.stride_starts[s]];
    if (here != rec.terrain[rec.stride_starts[s - 1]]) continue;  // blended stride
    const double len = static_cast<double>(rec.stride_end(s) - rec.stride_starts[s]);
    const double cps = kSampleRate / len;
    for (auto seg : {Segment::LeftThigh, Segment::RightThigh, Segment::Pelvis}) {
      const auto& curve = seg == Segment::Pelvis ? cfg.profile(here).pelvis : cfg.profile(here).thigh;
      double third = 0.0;
      for (std::size_t k = 0; k < 3; ++k) third += std::fabs(curve.amp[k]) * std::pow(kTwoPi * (k + 1) * cps, 3);
      const double bound = h * h / 6.0 * third * deg * cfg.amplitude_scale[1] * 1.0001 + 1e-12;
      const auto pitch = channel_index(seg, Axis::Pitch), gyro = channel_index(seg, Axis::GyrY);
      for (std::size_t n = rec.stride_starts[s] + 1; n + 1 < rec.stride_end(s); ++n) {
        const double fd = (rec.value(pitch, n + 1) - rec.value(pitch, n - 1)) / (2.0 * h);
        ASSERT_LE(std::fabs(fd - rec.value(gyro, n)), bound) << "sample " << n;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Generator, NoiseMatchesSigma) {
  auto clean_cfg = small_config(20);
  clean_cfg.noise_sigma = 0.0;
  auto noisy_cfg = clean_cfg;
  noisy_cfg.noise_sigma = 0.05;
  const auto clean = synthesize_recording(clean_cfg, 0, 3);
  const auto noisy = synthesize_recording(noisy_cfg, 0, 3);
  double sq = 0.0;
  for (std::size_t i = 0; i < clean.channels.size(); ++i) {
    const double d = noisy.channels[i] - clean.channels[i];
    sq += d * d;
  }
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(clean.channels.size())), 0.05, 0.002);
}

TEST(Generator, InvalidConfig) {
  auto cfg = small_config();
  cfg.noise_sigma = -1.0;
  EXPECT_THROW(synthesize_recording(cfg, 0, 0), std::invalid_argument);
  cfg = small_config();
  cfg.min_dwell = 2;
  EXPECT_THROW(synthesize_recording(cfg, 0, 0), std::invalid_argument);
  cfg = small_config();
  cfg.terrains.erase("SD");
  EXPECT_THROW(synthesize_recording(cfg, 0, 0), std::invalid_argument);
}

TEST(Generator, ConfigJsonRoundTrip) {
  const GeneratorConfig cfg = small_config(33);
  const nlohmann::json j = cfg;
  const auto back = j.get<GeneratorConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.strides_per_recording, 33u);
}

TEST(Csv, RoundTripBitExact) {
  const auto rec = synthesize_recording(small_config(12), 6, 21);
  std::stringstream ss;
  write_csv(ss, rec);
  const auto back = read_csv(ss);
  EXPECT_EQ(back.subject_id, rec.subject_id);
  EXPECT_EQ(back.channels, rec.channels);
  EXPECT_EQ(back.stride_starts, rec.stride_starts);
  EXPECT_EQ(back.terrain, rec.terrain);
  EXPECT_EQ(back.phase_truth, rec.phase_truth);
}

TEST(Csv, MissingColumnNamed) {
  const auto rec = single_terrain(3, 30);
  std::stringstream ss;
  write_csv(ss, rec);
  std::string text = ss.str();
  const auto pos = text.find(",R_gyrz");
  text.erase(pos, 7);
  std::stringstream broken(text);
  try {
    read_csv(broken);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("R_gyrz"), std::string::npos) << e.what();
  }
}

namespace {

std::string csv_with_strides(const std::vector<std::pair<int, std::size_t>>& strides) {
  std::ostringstream out;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  std::size_t t = 0;
  for (auto [id, len] : strides)
    for (std::size_t n = 0; n < len; ++n, ++t) {
      out << t / 100.0 << ",1,LW," << id << ',' << 100.0 * n / len << ',' << 100.0 / len;
      for (std::size_t c = 0; c < kImuChannels; ++c) out << ",0";
      out << '\n';
    }
  return out.str();
}

}  // namespace

TEST(Csv, ShortStrideRejected) {
  std::stringstream ss(csv_with_strides({{0, 40}, {1, 10}, {2, 40}}));
  EXPECT_THROW(read_csv(ss), std::runtime_error);
  std::stringstream ok(csv_with_strides({{0, 40}, {1, 20}, {2, 40}}));
  EXPECT_NO_THROW(read_csv(ok));
}

TEST(Csv, NonMonotoneStrideRejected) {
  std::stringstream ss(csv_with_strides({{0, 40}, {2, 40}, {1, 40}}));
  EXPECT_THROW(read_csv(ss), std::runtime_error);
}

TEST(Csv, PhaseInconsistencyRejected) {
  std::string text = csv_with_strides({{0, 40}, {1, 40}});
  // Row for sample 5 claims phase 50%.
  std::istringstream lines(text);
  std::string out, line;
  for (std::size_t i = 0; std::getline(lines, line); ++i) {
    if (i == 6) {
      auto f = detail::split_fields(line);
      std::string rebuilt;
      for (std::size_t k = 0; k < f.size(); ++k) rebuilt += (k ? "," : "") + (k == 4 ? std::string("50") : std::string(f[k]));
      line = rebuilt;
    }
    out += line + "\n";
  }
  std::stringstream ss(out);
  EXPECT_THROW(read_csv(ss), std::runtime_error);
}

TEST(Windows, CountFormula) {
  const auto rec = single_terrain(10, 100);
  EXPECT_EQ(window_set(rec, 100, 1, false).count, 901u);
  EXPECT_EQ(window_set(rec, 100, 10, false).count, 91u);
  EXPECT_EQ(build_windows(rec, 100, 10, false).size(), 91u);
  EXPECT_THROW(window_set(rec, 1001, 1, false), std::invalid_argument);
  EXPECT_THROW(window_set(rec, 100, 0, false), std::invalid_argument);
}

TEST(Windows, PhaseRowsAndTargets) {
  const auto rec = single_terrain(5, 50);
  const auto zero = build_windows(rec, 40, 7, false);
  for (const auto& w : zero)
    for (std::size_t c = kImuChannels; c < kModelChannels; ++c)
      for (std::size_t n = 0; n < 40; ++n) ASSERT_EQ(w.x.at(c, n), 0.0);
  const auto with = build_windows(rec, 40, 7, true);
  for (std::size_t i = 0; i < with.size(); ++i) {
    const std::size_t last = i * 7 + 39;
    const auto expect = encode_polar(rec.phase_truth[last]);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(with[i].target[k], expect[k]);
      EXPECT_EQ(with[i].x.at(kImuChannels + k, 39), expect[k]);
    }
    for (std::size_t c = 0; c < kImuChannels; ++c) EXPECT_EQ(with[i].x.at(c, 0), rec.value(c, i * 7));
  }
}

TEST(Norm, ZScoreOnTrain) {
  auto rec = single_terrain(4, 50);
  for (std::size_t n = 0; n < rec.length(); ++n) rec.channels[3 * rec.length() + n] = 4.5;  // constant channel
  const auto stats = fit_norm_stats(std::vector<const Recording*>{&rec});
  const auto set = window_set(rec, rec.length(), 1, true);
  Tensor<double> x({kModelChannels, rec.length()});
  set.fill(x.ptr(), 0, &stats);
  for (std::size_t c = 0; c < kImuChannels; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t n = 0; n < rec.length(); ++n) m += x.at(c, n);
    m /= static_cast<double>(rec.length());
    for (std::size_t n = 0; n < rec.length(); ++n) v += (x.at(c, n) - m) * (x.at(c, n) - m);
    v /= static_cast<double>(rec.length());
    EXPECT_NEAR(m, 0.0, 1e-6);
    if (c == 3) {
      EXPECT_EQ(x.at(c, 0), 0.0);
    } else {
      EXPECT_NEAR(std::sqrt(v), 1.0, 1e-6);
    }
  }
  // Phase rows untouched.
  EXPECT_EQ(x.at(kImuChannels, 0), 1.0);
  EXPECT_EQ(x.at(kImuChannels + 2, 0), rec.phase_truth[0].rate);
}

TEST(Norm, ValidationUsesTrainStats) {
  const auto train = single_terrain(4, 50);
  auto val = single_terrain(4, 50);
  for (auto& v : val.channels.data()) v += 10.0;
  const auto stats = fit_norm_stats(std::vector<const Recording*>{&train});
  auto ds = make_dataset({&val}, 50, 50, false, stats);
  const std::vector<std::size_t> idx{0};
  auto [x, y] = ds.batch<double>(idx);
  EXPECT_NEAR(x.at(0, 0, 0), (val.value(0, 0) - stats.mean[0]) / stats.std[0], 1e-12);
  EXPECT_GT(x.at(0, 0, 0), 3.0);
}

TEST(Norm, ApplyNormMatchesFill) {
  const auto rec = single_terrain(3, 40);
  const auto stats = fit_norm_stats(std::vector<const Recording*>{&rec});
  const auto set = window_set(rec, 30, 5, true);
  auto raw = set.at(2).x;
  apply_norm(raw, stats);
  EXPECT_EQ(raw, set.at(2, &stats).x);
}

TEST(Masking, ChannelCount) {
  EXPECT_EQ(mask_count(24, 0.3), 7u);
  EXPECT_EQ(mask_count(24, 0.02), 1u);
  EXPECT_THROW(mask_count(24, 0.0), std::invalid_argument);
  EXPECT_THROW(mask_count(24, 1.0), std::invalid_argument);
  RngStream rng(8);
  Tensor<double> x({24, 10});
  for (auto& v : x.data()) v = rng.uniform(1.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto [xm, spec] = apply_channel_mask(x, 0.3, rng);
    ASSERT_EQ(spec.channels.size(), 7u);
    ASSERT_EQ(std::set<std::size_t>(spec.channels.begin(), spec.channels.end()).size(), 7u);
    for (std::size_t c = 0; c < 24; ++c) {
      const bool hidden = std::binary_search(spec.channels.begin(), spec.channels.end(), c);
      for (std::size_t n = 0; n < 10; ++n) ASSERT_EQ(xm.at(c, n), hidden ? 0.0 : x.at(c, n));
    }
  }
}

TEST(Masking, TwoDimensional) {
  RngStream rng(9);
  Tensor<double> x({4, 20}, 1.0);
  // 8 blocks; 1/8 ratio hides exactly one block.
  auto [one, spec] = apply_2d_mask(x, 0.125, 10, rng);
  ASSERT_EQ(spec.blocks.size(), 1u);
  std::size_t zeros = 0;
  for (auto v : one.data()) zeros += v == 0.0;
  EXPECT_EQ(zeros, 10u);
  EXPECT_THROW(apply_2d_mask(x, 0.3, 7, rng), std::invalid_argument);

  // Same area as the channel-wise mask when C * ratio is integral.
  Tensor<double> big({24, 100}, 1.0);
  auto [ch, ch_spec] = apply_channel_mask(big, 0.25, rng);
  auto [bl, bl_spec] = apply_2d_mask(big, 0.25, 10, rng);
  std::size_t ch_zero = 0, bl_zero = 0;
  for (auto v : ch.data()) ch_zero += v == 0.0;
  for (auto v : bl.data()) bl_zero += v == 0.0;
  EXPECT_EQ(ch_zero, 600u);
  EXPECT_EQ(bl_zero, ch_zero);
  for (std::size_t c = 0; c < 24; ++c)
    for (std::size_t n = 0; n < 100; ++n) EXPECT_EQ(bl.at(c, n) == 0.0, bl_spec.masked(c, n));
}

TEST(Splits, TenSubjects) {
  std::vector<int> subjects{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto folds = loocv_splits(subjects);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> all_test;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& f = folds[k];
    EXPECT_EQ(f.test, (std::vector<int>{int(2 * k), int(2 * k + 1)}));
    EXPECT_EQ(f.val.size(), 1u);
    EXPECT_EQ(f.train.size(), 7u);
    std::set<int> seen;
    for (auto v : {f.train, f.val, f.test})
      for (int s : v) EXPECT_TRUE(seen.insert(s).second) << "subject " << s << " in two roles";
    EXPECT_EQ(seen.size(), 10u);
    all_test.insert(all_test.end(), f.test.begin(), f.test.end());
  }
  EXPECT_EQ(all_test, subjects);
  const auto again = loocv_splits(subjects);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(again[k].train, folds[k].train);
  EXPECT_THROW(loocv_splits({1, 2, 3, 4}), std::invalid_argument);
}

TEST(Segmentation, SingleTerrainAllStable) {
  const auto rec = single_terrain(10, 60, Terrain::SD);
  const auto tags = segment_stable_vs_transition(rec, window_set(rec, 100, 1, false));
  for (const auto& t : tags) EXPECT_EQ(t, "stable:SD");
}

TEST(Segmentation, TransitionAroundBoundary) {
  auto rec = single_terrain(10, 60);
  for (std::size_t n = 300; n < rec.length(); ++n) rec.terrain[n] = Terrain::SA;
  const auto set = window_set(rec, 100, 1, false);
  const auto tags = segment_stable_vs_transition(rec, set);
  std::size_t stable = 0, transition = 0;
  for (std::size_t i = 0; i < set.count; ++i) {
    const std::size_t last = set.end(i), first = set.start(i);
    const bool spans = first < 300 && last >= 300;
    const bool near = (last < 300 && 300 - last <= 60) || (last >= 300 && last - 300 <= 60);
    if (spans || near) {
      EXPECT_EQ(tags[i], "transition:LW->SA") << i;
      ++transition;
    } else {
      EXPECT_EQ(tags[i], last < 300 ? "stable:LW" : "stable:SA") << i;
      ++stable;
    }
  }
  EXPECT_EQ(stable + transition, set.count);
  EXPECT_GT(stable, 0u);
  EXPECT_GT(transition, 0u);
}
