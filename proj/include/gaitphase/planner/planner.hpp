#pragma once

// Event-gated trajectory planning from decoded phase estimates.

#include "gaitphase/data/generator.hpp"
#include "gaitphase/phase.hpp"

#include "json.hpp"

#include <deque>
#include <functional>
#include <optional>

namespace gaitphase {

inline constexpr std::size_t kTemplateKnots = 101;
inline constexpr double kMaxTemplateDeg = 90.0;

struct TrajectoryTemplate {
  std::string terrain;
  std::array<double, kTemplateKnots> knots{};

  void validate() const {
    for (double v : knots)
      if (!std::isfinite(v) || std::fabs(v) > kMaxTemplateDeg)
        throw std::invalid_argument("template " + terrain + ": knot values must be finite and within +-90 deg");
    if (knots.front() != knots.back())
      throw std::invalid_argument("template " + terrain + ": first and last knot must be equal");
  }

  friend bool operator==(const TrajectoryTemplate&, const TrajectoryTemplate&) = default;
};

// Periodic linear interpolation on the 101-knot grid.
inline double target_angle(const TrajectoryTemplate& tmpl, double phi) {
  const double x = wrap_phase(phi) * static_cast<double>(kTemplateKnots - 1);
  const auto k = std::min(static_cast<std::size_t>(x), kTemplateKnots - 2);
  const double w = x - static_cast<double>(k);
  return tmpl.knots[k] + w * (tmpl.knots[k + 1] - tmpl.knots[k]);
}

using TemplateSet = std::map<std::string, TrajectoryTemplate>;

// Thigh pitch of the phase-reference leg at nominal amplitude and no offset.
inline TemplateSet templates_from_generator(const GeneratorConfig& cfg) {
  TemplateSet out;
  for (const auto& [name, profile] : cfg.terrains) {
    TrajectoryTemplate t;
    t.terrain = name;
    for (std::size_t k = 0; k + 1 < kTemplateKnots; ++k)
      t.knots[k] = profile.thigh.value(static_cast<double>(k) / static_cast<double>(kTemplateKnots - 1));
    t.knots.back() = t.knots.front();
    t.validate();
    out.emplace(name, t);
  }
  return out;
}

inline nlohmann::json templates_to_json(const TemplateSet& set) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : set) j[name] = t.knots;
  return j;
}

inline TemplateSet templates_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("templates: expected an object {terrain: [101 numbers]}");
  TemplateSet out;
  for (const auto& [name, arr] : j.items()) {
    if (!arr.is_array() || arr.size() != kTemplateKnots)
      throw std::invalid_argument("templates: " + name + " must hold exactly 101 values");
    TrajectoryTemplate t;
    t.terrain = name;
    for (std::size_t k = 0; k < kTemplateKnots; ++k) t.knots[k] = arr[k].get<double>();
    t.validate();
    out.emplace(name, t);
  }
  return out;
}

inline TemplateSet load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open template file " + path);
  return templates_from_json(nlohmann::json::parse(in));
}

// The raw wrap rule on two consecutive phases.
inline bool detect_gait_event(double prev, double curr) { return curr == 0.0 || (prev > 0.97 && curr < 0.03); }

inline double propagate_phase(const PhaseState& s) { return wrap_phase(s.phase + std::clamp(s.rate, kMinRate, kMaxRate)); }

// Applies the wrap rule with a refractory period. With smoothing_window > 1
// the rule sees the end point of a least-squares line through the last
// `smoothing_window` unwrapped phases instead of the raw phase; values within
// 1e-9 of a stride boundary are snapped onto it. Exact for noise-free
// piecewise-linear phase, and suppresses misses on noisy estimates.
class EventDetector {
 public:
  explicit EventDetector(std::size_t refractory = 20, std::size_t smoothing_window = 32)
      : refractory_(refractory), window_(smoothing_window) {}

  bool update(std::size_t n, double phase) {
    if (!(phase >= 0.0 && phase < 1.0)) throw std::invalid_argument("event detector: phase outside [0, 1)");
    if (have_prev_ && n <= last_n_) throw std::invalid_argument("event detector: sample index must increase");
    last_n_ = n;
    double curr = phase;
    if (window_ > 1) {
      const double u = unwrapped_.empty() ? phase : unwrapped_.back() + signed_delta(unwrapped_.back(), phase);
      unwrapped_.push_back(u);
      if (unwrapped_.size() > window_) unwrapped_.pop_front();
      curr = smoothed();
    }
    const bool raw = have_prev_ && detect_gait_event(prev_, curr);
    const bool first_zero = !have_prev_ && curr == 0.0;
    prev_ = curr;
    have_prev_ = true;
    if (!(raw || first_zero)) return false;
    if (!events_.empty() && n - events_.back() < refractory_) return false;
    events_.push_back(n);
    return true;
  }

  const std::vector<std::size_t>& events() const { return events_; }

 private:
  static double signed_delta(double from_unwrapped, double to) {
    double d = to - wrap_phase(from_unwrapped);
    return d - std::round(d);
  }

  double smoothed() const {
    const std::size_t k = unwrapped_.size();
    if (k < 2) return wrap_phase(unwrapped_.back());
    const double xm = static_cast<double>(k - 1) / 2.0;
    double ym = 0.0;
    for (double v : unwrapped_) ym += v;
    ym /= static_cast<double>(k);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double dx = static_cast<double>(i) - xm;
      sxy += dx * (unwrapped_[i] - ym);
      sxx += dx * dx;
    }
    double end = ym + sxy / sxx * (static_cast<double>(k - 1) - xm);
    if (std::fabs(end - std::round(end)) < 1e-9) end = std::round(end);
    return wrap_phase(end);
  }

  std::size_t refractory_;
  std::size_t window_;
  std::deque<double> unwrapped_;
  double prev_ = 0.0;
  std::size_t last_n_ = 0;
  bool have_prev_ = false;
  std::vector<std::size_t> events_;
};

struct PlannerConfig {
  std::size_t refractory = 20;
  std::size_t event_smoothing_window = 32;  // 0 applies the raw rule
  std::size_t activation_events = 2;
  std::size_t history = 256;
  double deadline_ms = 10.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PlannerConfig, refractory, event_smoothing_window, activation_events,
                                                history, deadline_ms)

// Supplies the template for the next stride given the current terrain label.
using TemplateProvider = std::function<TrajectoryTemplate(const std::string& terrain)>;

inline TemplateProvider template_lookup(TemplateSet set) {
  return [set = std::move(set)](const std::string& terrain) {
    auto it = set.find(terrain);
    if (it == set.end()) throw std::invalid_argument("no trajectory template for terrain " + terrain);
    return it->second;
  };
}

struct PlanStep {
  std::size_t n = 0;
  PhaseState state;
  bool event = false;
  double next_phase = 0.0;
  std::optional<double> target_deg;  // empty until the planner is active
};

class Planner {
 public:
  Planner(PlannerConfig cfg, TemplateProvider provider)
      : cfg_(cfg), provider_(std::move(provider)), detector_(cfg.refractory, cfg.event_smoothing_window) {
    if (!provider_) throw std::invalid_argument("planner: template provider is required");
    if (cfg_.activation_events == 0) throw std::invalid_argument("planner: activation_events must be >= 1");
  }

  // Decode, detect, swap the template on events, propagate, interpolate.
  PlanStep step(const PhaseVector& g, const std::string& terrain) {
    PlanStep out;
    out.n = n_++;
    out.state = decode_polar(g);
    history_.push_back(out.state.phase);
    if (history_.size() > cfg_.history) history_.pop_front();
    out.event = detector_.update(out.n, out.state.phase);
    if (out.event && detector_.events().size() >= cfg_.activation_events) {
      TrajectoryTemplate next = provider_(terrain);
      if (!active_ || !(next == *active_)) {
        active_ = std::move(next);
        ++swaps_;
      }
    }
    out.next_phase = propagate_phase(out.state);
    if (active_) out.target_deg = target_angle(*active_, out.next_phase);
    return out;
  }

  bool active() const { return active_.has_value(); }
  const TrajectoryTemplate& active_template() const {
    if (!active_) throw std::logic_error("planner: uninitialized (fewer than the required gait events observed)");
    return *active_;
  }
  const std::vector<std::size_t>& events() const { return detector_.events(); }
  const std::deque<double>& history() const { return history_; }
  std::size_t template_swaps() const { return swaps_; }
  const PlannerConfig& config() const { return cfg_; }

 private:
  PlannerConfig cfg_;
  TemplateProvider provider_;
  EventDetector detector_;
  std::optional<TrajectoryTemplate> active_;
  std::deque<double> history_;
  std::size_t n_ = 0;
  std::size_t swaps_ = 0;
};

struct TrackMetrics {
  double rmse_deg = 0.0;
  double pcc = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrackMetrics, rmse_deg, pcc)

inline TrackMetrics track_metrics(std::span<const double> planned, std::span<const double> measured) {
  if (planned.size() != measured.size()) throw std::invalid_argument("track_metrics: length mismatch");
  if (planned.size() < 2) throw std::invalid_argument("track_metrics: need at least 2 samples");
  const double n = static_cast<double>(planned.size());
  double sq = 0.0, mp = 0.0, mm = 0.0;
  for (std::size_t i = 0; i < planned.size(); ++i) {
    const double e = planned[i] - measured[i];
    sq += e * e;
    mp += planned[i];
    mm += measured[i];
  }
  mp /= n;
  mm /= n;
  double spp = 0.0, smm = 0.0, spm = 0.0;
  for (std::size_t i = 0; i < planned.size(); ++i) {
    const double a = planned[i] - mp, b = measured[i] - mm;
    spp += a * a;
    smm += b * b;
    spm += a * b;
  }
  if (smm == 0.0 || spp == 0.0) throw std::invalid_argument("track_metrics: PCC undefined for a constant sequence");
  return {std::sqrt(sq / n), spm / std::sqrt(spp * smm)};
}

}  // namespace gaitphase
