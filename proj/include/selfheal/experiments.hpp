#pragma once

// Profiling of traces into per-threshold cost summaries, frequencies and
// features, plus the sweep driver that fans settings out over worker threads.

#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "selfheal/app.hpp"
#include "selfheal/calibration.hpp"
#include "selfheal/config.hpp"
#include "selfheal/csv.hpp"
#include "selfheal/fault_model.hpp"
#include "selfheal/simkernel.hpp"

namespace selfheal {

inline constexpr std::size_t kHistogramBins = 100;
inline constexpr double kHistogramMax = 2.0;  // a pair's unweighted cost never exceeds 2

struct PairCost {
  NodeId monitor = 0;
  NodeId monitored = 0;
  ScenarioId scenario = ScenarioId::S1;
  CostSummary cost;
};

struct ThresholdProfile {
  Epoch threshold_ref = 0;
  Epoch threshold = 0;
  std::uint64_t pairs = 0;
  std::array<std::uint64_t, kClassCount> class_counts{};
  std::array<std::uint64_t, kScenarioCount> scenario_counts{};
  std::array<std::uint64_t, kStreamCount> stream_nonzero{};
  StreamTotals totals;
  CostSummary cost;
  std::array<std::uint64_t, kHistogramBins> histogram{};
  FeatureVector features{};
  std::vector<PairCost> pair_costs;  // filled only on request
};

struct ProfileOptions {
  CostWeights weights{};
  double fault_scale = 0.0;
  Epoch max_threshold = 1;  // rescaled, same units as the trace thresholds
  std::vector<Epoch> thresholds_ref;
  bool emit_pairs = false;
};

/// Evaluates every ordered pair of an all-pairs trace at every tracked threshold.
inline std::vector<ThresholdProfile> profile_trace(const SimTrace& trace, const ProfileOptions& opt) {
  const auto thresholds = trace.pairs.thresholds();
  std::vector<ThresholdProfile> out;
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    ThresholdProfile p;
    p.threshold = thresholds[ti];
    p.threshold_ref = ti < opt.thresholds_ref.size() ? opt.thresholds_ref[ti] : thresholds[ti];
    StreamPopulations pops;
    trace.for_each_record(ti, [&](NodeId a, NodeId b, const PairRecord& r) {
      const ScenarioId s = classify_scenario(r);
      const CostBreakdown c = relative_costs(r);
      ++p.pairs;
      ++p.class_counts[static_cast<std::size_t>(class_of(s))];
      ++p.scenario_counts[static_cast<std::size_t>(s)];
      p.totals.add(c);
      for (std::size_t k = 0; k < kStreamCount; ++k) {
        if (kStreams[k].scenario == s) pops[k].push_back(c.rho[k]);
        if (c.rho[k] > 0.0) ++p.stream_nonzero[k];
      }
      const CostSummary w = weighted_cost(c, opt.weights);
      p.cost += w;
      const double unweighted = weighted_cost(c, CostWeights{}).c_total;
      auto bin = static_cast<std::size_t>(unweighted / kHistogramMax * static_cast<double>(kHistogramBins));
      ++p.histogram[std::min(bin, kHistogramBins - 1)];
      if (opt.emit_pairs) p.pair_costs.push_back({a, b, s, w});
    });
    p.features = extract_features(std::move(pops), static_cast<double>(p.threshold),
                                  static_cast<double>(opt.max_threshold), opt.fault_scale);
    out.push_back(std::move(p));
  }
  return out;
}

struct SettingResult {
  FaultProfile profile = FaultProfile::P1;
  double fault_scale = 0.0;
  Epoch threshold_ref = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ThresholdProfile profiled;
  double app_error = std::numeric_limits<double>::quiet_NaN();

  std::string key() const { return setting_key(profile, fault_scale, threshold_ref); }
};

/// Seed shared by all thresholds of one (profile, scale), so they see the same gossip trace.
inline std::uint64_t setting_seed(std::uint64_t base, FaultProfile p, double scale) {
  return derive_seed(base, hash_string(trace_key(p, scale)));
}

inline ExperimentConfig setting_config(const ExperimentConfig& base, FaultProfile p, double scale,
                                       std::span<const Epoch> thresholds_ref) {
  ExperimentConfig c = base;
  c.profile = p;
  c.fault_scale = scale;
  c.thresholds.assign(thresholds_ref.begin(), thresholds_ref.end());
  c.seed = setting_seed(base.seed, p, scale);
  return c;
}

inline ProfileOptions profile_options(const ExperimentConfig& c, bool emit_pairs = false) {
  ProfileOptions o;
  o.weights = c.weights;
  o.fault_scale = c.fault_scale;
  o.max_threshold = c.scaled(c.max_threshold);
  // tracked thresholds come back sorted and unique; keep the reference values aligned
  std::vector<std::pair<Epoch, Epoch>> m;
  for (Epoch t : c.thresholds) m.emplace_back(c.scaled(t), t);
  std::sort(m.begin(), m.end());
  m.erase(std::unique(m.begin(), m.end(), [](auto& x, auto& y) { return x.first == y.first; }), m.end());
  for (auto& [s, r] : m) o.thresholds_ref.push_back(r);
  o.emit_pairs = emit_pairs;
  return o;
}

/// All-pairs trace of one configuration, profiled at all of its thresholds.
inline std::vector<ThresholdProfile> run_profile(const ExperimentConfig& c, bool emit_pairs = false) {
  SimConfig sim = c.sim();
  sim.monitoring_mode = MonitoringMode::all_pairs;
  const SimTrace trace = run(sim, c.plan());
  return profile_trace(trace, profile_options(c, emit_pairs));
}

inline AppRun run_app_for(const ExperimentConfig& c, Epoch threshold_ref, const ConsumptionDataset& data) {
  AppConfig app = c.app;
  app.threshold_t = c.scaled(threshold_ref);
  return run_application(c.sim(), c.plan(), app, data);
}

/// Runs `jobs` on up to `workers` threads; job i writes only its own output slot.
template <class Fn>
void parallel_for(std::size_t jobs, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Results in setting order (profile, scale, threshold), whatever the worker count.
inline std::vector<SettingResult> run_sweep(const SweepSpec& spec, const ConsumptionDataset& data,
                                            std::size_t workers) {
  struct Group {
    FaultProfile profile;
    double scale;
    std::vector<ThresholdProfile> profiles;
    std::string error;
  };
  std::vector<Group> groups;
  for (auto p : spec.profiles) {
    for (double s : spec.fault_scales) groups.push_back({p, s, {}, {}});
  }
  const std::size_t nt = spec.thresholds.size();
  std::vector<SettingResult> results(groups.size() * nt);

  parallel_for(groups.size(), workers, [&](std::size_t g) {
    auto& gr = groups[g];
    try {
      gr.profiles = run_profile(setting_config(spec.base, gr.profile, gr.scale, spec.thresholds));
    } catch (const std::exception& e) {
      gr.error = e.what();
    }
  });

  parallel_for(results.size(), workers, [&](std::size_t i) {
    const auto& gr = groups[i / nt];
    auto& r = results[i];
    r.profile = gr.profile;
    r.fault_scale = gr.scale;
    r.threshold_ref = spec.thresholds[i % nt];
    const ExperimentConfig c = setting_config(spec.base, gr.profile, gr.scale, spec.thresholds);
    r.seed = c.seed;
    if (!gr.error.empty()) {
      r.error = gr.error;
      return;
    }
    try {
      const Epoch scaled = c.scaled(r.threshold_ref);
      for (const auto& p : gr.profiles) {
        if (p.threshold == scaled) r.profiled = p;
      }
      r.app_error = run_app_for(c, r.threshold_ref, data).app_error;
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  });
  return results;
}

// ---- CSV emitters -------------------------------------------------------

inline std::string scale_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", s);
  return buf;
}

inline std::string results_csv(std::span<const SettingResult> rs) {
  CsvWriter w({"profile", "scale", "threshold", "seed", "c_fp", "c_fn", "c_total", "app_error"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rs) {
    w.add(std::string(profile_name(r.profile)), scale_text(r.fault_scale), r.threshold_ref, r.seed,
          r.ok ? r.profiled.cost.c_fp : nan, r.ok ? r.profiled.cost.c_fn : nan, r.ok ? r.profiled.cost.c_total : nan,
          r.ok ? r.app_error : nan);
  }
  return w.str();
}

inline std::vector<std::string> features_header() {
  std::vector<std::string> h{"setting_key"};
  for (std::size_t i = 0; i < kFeatureCount; ++i) h.push_back(feature_name(i));
  return h;
}

struct KeyedProfile {
  std::string key;
  std::string profile;
  double scale = 0.0;
  Epoch threshold_ref = 0;
  const ThresholdProfile* p = nullptr;
};

inline std::string features_csv(std::span<const KeyedProfile> rows) {
  CsvWriter w(features_header());
  for (const auto& r : rows) {
    std::vector<std::string> f{r.key};
    for (double x : r.p->features) f.push_back(format_double(x));
    w.row(f);
  }
  return w.str();
}

inline std::string stream_costs_csv(std::span<const KeyedProfile> rows) {
  std::vector<std::string> h{"setting_key", "pairs"};
  for (const auto& s : kStreams) h.emplace_back(s.label);
  CsvWriter w(h);
  for (const auto& r : rows) {
    std::vector<std::string> f{r.key, std::to_string(r.p->pairs)};
    for (double x : r.p->totals.sum) f.push_back(format_double(x));
    w.row(f);
  }
  return w.str();
}

inline std::string cost_summary_csv(std::span<const KeyedProfile> rows) {
  CsvWriter w({"profile", "scale", "threshold", "pairs", "c_fp", "c_fn", "c_total", "c_per_pair"});
  for (const auto& r : rows) {
    const auto& c = r.p->cost;
    w.add(r.profile, scale_text(r.scale), r.threshold_ref, r.p->pairs, c.c_fp, c.c_fn, c.c_total,
          r.p->pairs ? c.c_total / static_cast<double>(r.p->pairs) : 0.0);
  }
  return w.str();
}

inline std::string stream_state_label(const StreamInfo& s) {
  const std::string pol = s.polarity == Polarity::FP ? "FP" : "FN";
  const auto dash = s.label.find("-FN-");
  if (dash != std::string_view::npos) return std::string(s.label.substr(dash + 1));
  return pol;
}

/// Class totals (state ALL) and, per stream, pairs with nonzero cost. The
/// denominator is n^2 - n, or the pair count of the stream's scenario when `per_scenario`.
inline std::string frequencies_csv(std::span<const KeyedProfile> rows, bool per_scenario = false) {
  CsvWriter w({"profile", "scale", "threshold", "scenario", "state", "count", "rel_freq"});
  for (const auto& r : rows) {
    const auto& p = *r.p;
    const double all = static_cast<double>(p.pairs);
    for (std::size_t c = 0; c < kClassCount; ++c) {
      const auto cnt = p.class_counts[c];
      const double den = per_scenario ? static_cast<double>(cnt) : all;
      w.add(r.profile, scale_text(r.scale), r.threshold_ref, std::string(class_name(static_cast<ScenarioClass>(c))),
            "ALL", cnt, den > 0 ? static_cast<double>(cnt) / den : 0.0);
    }
    for (std::size_t k = 0; k < kStreamCount; ++k) {
      const auto& s = kStreams[k];
      const auto cnt = p.stream_nonzero[k];
      const double den = per_scenario ? static_cast<double>(p.scenario_counts[static_cast<std::size_t>(s.scenario)]) : all;
      w.add(r.profile, scale_text(r.scale), r.threshold_ref, std::string(scenario_name(s.scenario)),
            stream_state_label(s), cnt, den > 0 ? static_cast<double>(cnt) / den : 0.0);
    }
  }
  return w.str();
}

inline std::string histogram_csv(std::span<const KeyedProfile> rows) {
  CsvWriter w({"profile", "scale", "threshold", "bin_lo", "bin_hi", "count"});
  const double width = kHistogramMax / static_cast<double>(kHistogramBins);
  for (const auto& r : rows) {
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
      w.add(r.profile, scale_text(r.scale), r.threshold_ref, static_cast<double>(b) * width,
            static_cast<double>(b + 1) * width, r.p->histogram[b]);
    }
  }
  return w.str();
}

inline std::string pair_costs_csv(std::span<const KeyedProfile> rows) {
  CsvWriter w({"profile", "scale", "threshold", "monitor", "monitored", "scenario", "c_fp", "c_fn", "c_total"});
  for (const auto& r : rows) {
    for (const auto& pc : r.p->pair_costs) {
      w.add(r.profile, scale_text(r.scale), r.threshold_ref, pc.monitor, pc.monitored,
            std::string(scenario_name(pc.scenario)), pc.cost.c_fp, pc.cost.c_fn, pc.cost.c_total);
    }
  }
  return w.str();
}

inline std::string timeseries_csv(std::span<const TimeseriesRow> rows) {
  CsvWriter w({"epoch", "actual_sum", "faulty_estimate_mean", "corrective_estimate_mean", "avg_rel_error_faulty",
               "avg_rel_error_corrective"});
  for (const auto& r : rows) {
    w.add(r.epoch, r.actual_sum, r.faulty_estimate_mean, r.corrective_estimate_mean, r.avg_rel_error_faulty,
          r.avg_rel_error_corrective);
  }
  return w.str();
}

inline std::vector<TimeseriesRow> parse_timeseries(const CsvTable& t) {
  std::vector<TimeseriesRow> out;
  for (const auto& row : t.rows) {
    out.push_back({parse_int(row[0]), parse_double(row[1]), parse_double(row[2]), parse_double(row[3]),
                   parse_double(row[4]), parse_double(row[5])});
  }
  return out;
}

inline std::string events_csv(std::span<const EventRecord> events) {
  CsvWriter w({"epoch", "kind", "node", "other", "value"});
  for (const auto& e : events) w.add(e.epoch, e.kind, e.node, e.other, e.value);
  return w.str();
}

}  // namespace selfheal
