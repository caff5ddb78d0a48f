#pragma once

// JSON configuration for single runs and sweeps. Unknown keys are rejected and
// every error names the offending key.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfheal/app.hpp"
#include "selfheal/calibration.hpp"
#include "selfheal/fault_model.hpp"
#include "selfheal/simkernel.hpp"

namespace selfheal {

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(std::string k, const std::string& what) : std::runtime_error(k + ": " + what), key(std::move(k)) {}
};

inline constexpr Epoch kReferenceBootstrap = 400;
inline constexpr Epoch kReferenceMaxThreshold = 800;

/// Everything one experimental run needs. Thresholds are given on the
/// 3200-epoch reference axis and rescaled to `epochs`.
struct ExperimentConfig {
  std::size_t nodes = 300;
  Epoch epochs = 800;
  std::optional<Epoch> bootstrap_epochs;
  std::uint64_t seed = 1;
  std::string epoch_duration = "250 ms";
  GossipConfig gossip{};
  FaultProfile profile = FaultProfile::P1;
  double fault_scale = 0.5;
  std::map<NodeId, Epoch> recoveries;
  std::vector<Epoch> thresholds{100};
  Epoch max_threshold = kReferenceMaxThreshold;
  CostWeights weights{};
  AppConfig app{};
  CalibrationConfig calibration{};

  Epoch scaled(Epoch reference) const { return std::max<Epoch>(1, rescale_epoch(reference, epochs)); }
  Epoch bootstrap() const { return bootstrap_epochs ? *bootstrap_epochs : rescale_epoch(kReferenceBootstrap, epochs); }

  std::vector<Epoch> scaled_thresholds() const {
    std::vector<Epoch> v;
    for (Epoch t : thresholds) v.push_back(scaled(t));
    return v;
  }

  SimConfig sim() const {
    SimConfig s;
    s.n_nodes = nodes;
    s.epochs_T = epochs;
    s.bootstrap_epochs = bootstrap();
    s.epoch_duration_label = epoch_duration;
    s.seed = seed;
    s.gossip = gossip;
    s.threshold_t = scaled(thresholds.front());
    s.pair_thresholds = scaled_thresholds();
    return s;
  }

  FaultPlan plan() const {
    FaultPlan p = build_fault_plan({profile, fault_scale, epochs}, nodes, seed);
    p.recoveries = recoveries;
    return p;
  }
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError(where.empty() ? k : where + "." + k, "unknown key");
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, std::string("invalid value (") + e.what() + ")");
  }
}

inline std::int64_t get_int(const json& j, const std::string& key, const std::string& path, std::int64_t lo) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < lo) throw ConfigError(path, "must be >= " + std::to_string(lo));
  return x;
}

inline double get_real(const json& j, const std::string& key, const std::string& path) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

inline std::string join(const std::string& p, const std::string& k) { return p.empty() ? k : p + "." + k; }

inline std::array<double, kScenarioCount> parse_weight_set(const json& j, const std::string& path) {
  std::array<double, kScenarioCount> w;
  w.fill(1.0);
  if (!j.is_object()) throw ConfigError(path, "expected an object keyed by scenario");
  for (const auto& [k, v] : j.items()) {
    std::size_t idx = kScenarioCount;
    for (std::size_t s = 0; s < kScenarioCount; ++s) {
      if (scenario_name(static_cast<ScenarioId>(s)) == k) idx = s;
    }
    if (idx == kScenarioCount) throw ConfigError(join(path, k), "unknown scenario");
    if (!v.is_number() || v.get<double>() < 0.0) throw ConfigError(join(path, k), "weight must be a number >= 0");
    w[idx] = v.get<double>();
  }
  return w;
}

}  // namespace detail

/// Fills `cfg` from the keys present in `j`; absent keys keep their values.
inline void apply_config(ExperimentConfig& cfg, const nlohmann::json& j, const std::string& prefix = "") {
  using detail::join;
  detail::check_keys(j, prefix,
                     {"nodes", "epochs", "bootstrap_epochs", "seed", "epoch_duration", "gossip", "fault", "thresholds",
                      "max_threshold", "weights", "aggregation", "calibration"});
  if (j.contains("nodes")) cfg.nodes = static_cast<std::size_t>(detail::get_int(j, "nodes", join(prefix, "nodes"), 2));
  if (j.contains("epochs")) cfg.epochs = detail::get_int(j, "epochs", join(prefix, "epochs"), 1);
  if (j.contains("bootstrap_epochs")) {
    cfg.bootstrap_epochs = detail::get_int(j, "bootstrap_epochs", join(prefix, "bootstrap_epochs"), 0);
  }
  if (j.contains("seed")) cfg.seed = static_cast<std::uint64_t>(detail::get_int(j, "seed", join(prefix, "seed"), 0));
  if (j.contains("epoch_duration")) {
    cfg.epoch_duration = detail::get<std::string>(j, "epoch_duration", join(prefix, "epoch_duration"));
  }
  if (j.contains("gossip")) {
    const auto& g = j.at("gossip");
    const auto p = join(prefix, "gossip");
    detail::check_keys(g, p, {"view_capacity", "healer", "swap", "peer_selection"});
    if (g.contains("view_capacity")) {
      cfg.gossip.view_capacity = static_cast<std::size_t>(detail::get_int(g, "view_capacity", p + ".view_capacity", 2));
    }
    if (g.contains("healer")) cfg.gossip.healer_H = static_cast<std::size_t>(detail::get_int(g, "healer", p + ".healer", 0));
    if (g.contains("swap")) cfg.gossip.swap_S = static_cast<std::size_t>(detail::get_int(g, "swap", p + ".swap", 0));
    if (g.contains("peer_selection")) {
      const auto s = detail::get<std::string>(g, "peer_selection", p + ".peer_selection");
      if (s == "random") cfg.gossip.peer_selection = PeerSelection::random;
      else if (s == "oldest") cfg.gossip.peer_selection = PeerSelection::oldest;
      else throw ConfigError(p + ".peer_selection", "expected 'random' or 'oldest'");
    }
  }
  if (j.contains("fault")) {
    const auto& f = j.at("fault");
    const auto p = join(prefix, "fault");
    detail::check_keys(f, p, {"profile", "scale", "recoveries"});
    if (f.contains("profile")) {
      try {
        cfg.profile = parse_profile(detail::get<std::string>(f, "profile", p + ".profile"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(p + ".profile", e.what());
      }
    }
    if (f.contains("scale")) cfg.fault_scale = detail::get_real(f, "scale", p + ".scale");
    if (f.contains("recoveries")) {
      const auto& r = f.at("recoveries");
      if (!r.is_array()) throw ConfigError(p + ".recoveries", "expected an array of {node, epoch}");
      cfg.recoveries.clear();
      for (std::size_t i = 0; i < r.size(); ++i) {
        const auto rp = p + ".recoveries[" + std::to_string(i) + "]";
        detail::check_keys(r[i], rp, {"node", "epoch"});
        if (!r[i].contains("node") || !r[i].contains("epoch")) throw ConfigError(rp, "needs node and epoch");
        cfg.recoveries[static_cast<NodeId>(detail::get_int(r[i], "node", rp + ".node", 0))] =
            detail::get_int(r[i], "epoch", rp + ".epoch", 1);
      }
    }
  }
  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    const auto p = join(prefix, "thresholds");
    if (!t.is_array() || t.empty()) throw ConfigError(p, "expected a non-empty array of integers");
    cfg.thresholds.clear();
    for (const auto& x : t) {
      if (!x.is_number_integer() || x.get<std::int64_t>() < 1) throw ConfigError(p, "thresholds must be integers >= 1");
      cfg.thresholds.push_back(x.get<Epoch>());
    }
  }
  if (j.contains("max_threshold")) cfg.max_threshold = detail::get_int(j, "max_threshold", join(prefix, "max_threshold"), 1);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    const auto p = join(prefix, "weights");
    detail::check_keys(w, p, {"fp", "fn"});
    if (w.contains("fp")) cfg.weights.eps_fp = detail::parse_weight_set(w.at("fp"), p + ".fp");
    if (w.contains("fn")) cfg.weights.eps_fn = detail::parse_weight_set(w.at("fn"), p + ".fn");
  }
  if (j.contains("aggregation")) {
    const auto& a = j.at("aggregation");
    const auto p = join(prefix, "aggregation");
    detail::check_keys(a, p, {"period", "correction", "memory", "bloom_bits", "bloom_hashes"});
    if (a.contains("period")) cfg.app.aggregation_period = detail::get_int(a, "period", p + ".period", 1);
    if (a.contains("correction")) cfg.app.correction = detail::get<bool>(a, "correction", p + ".correction");
    if (a.contains("memory")) {
      const auto m = detail::get<std::string>(a, "memory", p + ".memory");
      if (m == "exact") cfg.app.memory = MemoryMode::exact;
      else if (m == "bloom") cfg.app.memory = MemoryMode::bloom;
      else throw ConfigError(p + ".memory", "expected 'exact' or 'bloom'");
    }
    if (a.contains("bloom_bits")) cfg.app.bloom.m_bits = static_cast<std::size_t>(detail::get_int(a, "bloom_bits", p + ".bloom_bits", 1));
    if (a.contains("bloom_hashes")) {
      cfg.app.bloom.k_hashes = static_cast<std::size_t>(detail::get_int(a, "bloom_hashes", p + ".bloom_hashes", 1));
    }
  }
  if (j.contains("calibration")) {
    const auto& c = j.at("calibration");
    const auto p = join(prefix, "calibration");
    detail::check_keys(c, p, {"lambda", "lambda_grid", "elastic_alpha", "elastic_l1_ratio"});
    if (c.contains("lambda")) cfg.calibration.lambda = detail::get_real(c, "lambda", p + ".lambda");
    if (c.contains("lambda_grid")) {
      const auto& g = c.at("lambda_grid");
      if (!g.is_array() || g.empty()) throw ConfigError(p + ".lambda_grid", "expected a non-empty array");
      cfg.calibration.lambda_grid.clear();
      for (const auto& x : g) {
        if (!x.is_number()) throw ConfigError(p + ".lambda_grid", "expected numbers");
        cfg.calibration.lambda_grid.push_back(x.get<double>());
      }
    }
    if (c.contains("elastic_alpha")) cfg.calibration.elastic_alpha = detail::get_real(c, "elastic_alpha", p + ".elastic_alpha");
    if (c.contains("elastic_l1_ratio")) {
      cfg.calibration.elastic_l1_ratio = detail::get_real(c, "elastic_l1_ratio", p + ".elastic_l1_ratio");
    }
  }
}

/// Semantic checks after parsing; errors name the key at fault.
inline void validate(const ExperimentConfig& c, const std::string& prefix = "") {
  using detail::join;
  auto wrap = [&](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(join(prefix, key), e.what());
    }
  };
  if (c.nodes < 2) throw ConfigError(join(prefix, "nodes"), "must be >= 2");
  if (c.bootstrap() < 0 || c.bootstrap() >= c.epochs) {
    throw ConfigError(join(prefix, "bootstrap_epochs"), "must lie in [0, epochs)");
  }
  wrap("gossip", [&] { validate(c.gossip); });
  if (!(c.fault_scale >= 0.0 && c.fault_scale <= 1.0)) throw ConfigError(join(prefix, "fault.scale"), "must lie in [0, 1]");
  for (Epoch t : c.scaled_thresholds()) {
    if (t > c.epochs) throw ConfigError(join(prefix, "thresholds"), "rescaled threshold exceeds epochs");
  }
  wrap("calibration", [&] { validate(c.calibration); });
  wrap("aggregation", [&] { validate(c.app); });
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  apply_config(c, j);
  validate(c);
  try {
    validate(c.plan());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("fault", e.what());
  }
  return c;
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(what, std::string("malformed JSON: ") + e.what());
  }
}

/// Cartesian product of profiles x fault scales x thresholds over a base config.
struct SweepSpec {
  ExperimentConfig base;
  std::vector<FaultProfile> profiles;
  std::vector<double> fault_scales;
  std::vector<Epoch> thresholds;
  std::size_t parallelism = 1;

  std::size_t size() const { return profiles.size() * fault_scales.size() * thresholds.size(); }
};

inline SweepSpec parse_sweep_spec(const nlohmann::json& j) {
  detail::check_keys(j, "", {"base", "profiles", "fault_scales", "thresholds", "parallelism"});
  SweepSpec s;
  if (j.contains("base")) apply_config(s.base, j.at("base"), "base");
  auto need_array = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ConfigError(key, "missing");
    const auto& a = j.at(key);
    if (!a.is_array() || a.empty()) throw ConfigError(key, "expected a non-empty array");
    return a;
  };
  for (const auto& p : need_array("profiles")) {
    try {
      s.profiles.push_back(parse_profile(p.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError("profiles", e.what());
    }
  }
  for (const auto& x : need_array("fault_scales")) {
    if (!x.is_number() || x.get<double>() < 0.0 || x.get<double>() > 1.0) {
      throw ConfigError("fault_scales", "values must be numbers in [0, 1]");
    }
    s.fault_scales.push_back(x.get<double>());
  }
  for (const auto& x : need_array("thresholds")) {
    if (!x.is_number_integer() || x.get<std::int64_t>() < 1) throw ConfigError("thresholds", "values must be integers >= 1");
    s.thresholds.push_back(x.get<Epoch>());
  }
  if (j.contains("parallelism")) s.parallelism = static_cast<std::size_t>(detail::get_int(j, "parallelism", "parallelism", 1));
  s.base.thresholds = s.thresholds;
  validate(s.base, "base");
  return s;
}

/// "P1/0.50/100": profile, fault scale with two decimals, reference threshold.
inline std::string setting_key(FaultProfile p, double scale, Epoch threshold) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%.2f/%lld", std::string(profile_name(p)).c_str(), scale,
                static_cast<long long>(threshold));
  return buf;
}

inline std::string trace_key(FaultProfile p, double scale) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s/%.2f", std::string(profile_name(p)).c_str(), scale);
  return buf;
}

}  // namespace selfheal
