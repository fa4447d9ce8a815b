#pragma once

// Checkpoint directory: manifest.json (format version, kind, config,
// parameter table, norm stats, seeds) and weights.bin holding every
// parameter as little-endian float32, concatenated in manifest order.

#include "gaitphase/data/windows.hpp"
#include "gaitphase/numerics/tensor.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace gaitphase {

inline constexpr int kCheckpointFormat = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::string kind;             // "tctst", "patchtst", "pretrain"
  nlohmann::json config;        // model (and run) configuration
  NormStats norm;
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();  // free-form run summary
  std::vector<NamedTensor> params;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
};

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  std::ofstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "weights.bin").string());
  std::vector<std::uint32_t> words;
  for (const auto& p : ck.params) {
    const std::size_t bytes = p.value.size() * sizeof(float);
    table.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"dtype", "float32"}, {"offset", offset}, {"bytes", bytes}});
    words.resize(p.value.size());
    for (std::size_t i = 0; i < p.value.size(); ++i) words[i] = detail::to_little(std::bit_cast<std::uint32_t>(p.value[i]));
    bin.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  if (!bin) throw std::runtime_error("write failed: " + (dir / "weights.bin").string());

  const nlohmann::json manifest{{"format_version", kCheckpointFormat},
                                {"kind", ck.kind},
                                {"config", ck.config},
                                {"parameters", table},
                                {"norm_stats", ck.norm},
                                {"seeds", ck.seeds},
                                {"extra", ck.extra}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("checkpoint: cannot open " + (dir / "manifest.json").string());
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.at("format_version").get<int>() != kCheckpointFormat)
    throw std::runtime_error("checkpoint: unsupported format_version " + manifest.at("format_version").dump());

  Checkpoint ck;
  ck.kind = manifest.at("kind").get<std::string>();
  ck.config = manifest.at("config");
  ck.norm = manifest.at("norm_stats").get<NormStats>();
  ck.seeds = manifest.value("seeds", nlohmann::json::object());
  ck.extra = manifest.value("extra", nlohmann::json::object());

  std::ifstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot open " + (dir / "weights.bin").string());
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  for (const auto& entry : manifest.at("parameters")) {
    if (entry.at("dtype").get<std::string>() != "float32")
      throw std::runtime_error("checkpoint: unsupported dtype " + entry.at("dtype").dump());
    NamedTensor p{entry.at("name").get<std::string>(), Tensor<float>(entry.at("shape").get<Shape>())};
    const auto offset = entry.at("offset").get<std::size_t>(), bytes = entry.at("bytes").get<std::size_t>();
    if (bytes != p.value.size() * sizeof(float) || offset + bytes > raw.size())
      throw std::runtime_error("checkpoint: parameter " + p.name + " has inconsistent extent");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      std::uint32_t w;
      std::memcpy(&w, raw.data() + offset + i * sizeof(float), sizeof w);
      p.value[i] = std::bit_cast<float>(detail::to_little(w));
    }
    ck.params.push_back(std::move(p));
  }
  return ck;
}

// Copies every parameter of `model` into checkpoint form.
template <typename Model>
std::vector<NamedTensor> capture_parameters(const Model& model) {
  std::vector<NamedTensor> out;
  model.visit([&](const auto& p) { out.push_back({p.name, p.value.template cast<float>()}); });
  return out;
}

// Loads parameters by name. With `strict`, every model parameter must be
// present; returns the names that were filled.
template <typename Model>
std::vector<std::string> restore_parameters(Model& model, const std::vector<NamedTensor>& params, bool strict = true) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& p : params) by_name[p.name] = &p;
  std::vector<std::string> filled;
  model.visit([&](auto& p) {
    using T = typename std::decay_t<decltype(p.value)>::value_type;
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      if (strict) throw std::runtime_error("checkpoint: missing parameter " + p.name);
      return;
    }
    if (it->second->value.shape() != p.value.shape())
      throw std::runtime_error("checkpoint: parameter " + p.name + " has shape " + shape_str(it->second->value.shape()) +
                               ", model expects " + shape_str(p.value.shape()));
    p.value = it->second->value.template cast<T>();
    filled.push_back(p.name);
  });
  return filled;
}

}  // namespace gaitphase
