#pragma once

// Command-line plumbing: merged run configuration, dataset directories and
// checkpoint-to-model loading.

#include "gaitphase/data/csv.hpp"
#include "gaitphase/planner/realtime.hpp"
#include "gaitphase/train/experiment.hpp"

#include <filesystem>

namespace gaitphase {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BenchOptions, samples, warmup, paced)

struct RunConfig {
  ExperimentConfig experiment;
  PlannerConfig planner;
  BenchOptions bench;

  static RunConfig named(const std::string& profile) {
    RunConfig c;
    c.experiment = ExperimentConfig::named(profile);
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, experiment, planner, bench)

// Profile defaults with an optional JSON file merged over them (RFC 7396
// merge patch, so a file may set only the fields it changes).
inline RunConfig load_run_config(const std::string& profile, const std::string& path = {}) {
  nlohmann::json j = RunConfig::named(profile);
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("config " + path + ": " + e.what());
    }
    j.merge_patch(patch);
  }
  RunConfig cfg;
  try {
    cfg = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  cfg.experiment.dataset.generator.validate();
  cfg.experiment.validate();
  return cfg;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

inline std::string subject_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subject_%02d.csv", id);
  return buf;
}

// Writes one CSV per subject and manifest.json listing them.
inline void write_dataset_dir(const std::filesystem::path& dir, const std::vector<Recording>& recs,
                              const DatasetConfig& cfg) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest{{"dataset", cfg}, {"subjects", nlohmann::json::array()}};
  for (const auto& r : recs) {
    export_csv((dir / subject_file(r.subject_id)).string(), r);
    manifest["subjects"].push_back({{"subject", r.subject_id},
                                    {"file", subject_file(r.subject_id)},
                                    {"samples", r.length()},
                                    {"strides", r.stride_starts.size()}});
  }
  write_json(dir / "manifest.json", manifest);
}

inline std::vector<Recording> read_dataset_dir(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  std::vector<Recording> recs;
  for (const auto& s : manifest.at("subjects")) {
    recs.push_back(import_csv((dir / s.at("file").get<std::string>()).string()));
    if (recs.back().subject_id != s.at("subject").get<int>())
      throw std::runtime_error("dataset: " + s.at("file").get<std::string>() + " holds a different subject id");
  }
  return recs;
}

// Calls f(model) with the network described by an inference checkpoint.
template <typename F>
void with_checkpoint_model(const Checkpoint& ck, F&& f) {
  if (!ck.config.contains("model")) throw std::runtime_error("checkpoint: no model configuration");
  const auto mc = ck.config.at("model").get<TctstConfig>();
  if (ck.kind == "tctst") {
    TctstModel<float> m(mc, 0);
    restore_parameters(m, ck.params);
    f(m);
  } else if (ck.kind == "patchtst") {
    PatchTstModel<float> m(mc, 0);
    restore_parameters(m, ck.params);
    f(m);
  } else {
    throw std::runtime_error("checkpoint of kind '" + ck.kind + "' cannot be used for phase estimation");
  }
}

}  // namespace gaitphase
