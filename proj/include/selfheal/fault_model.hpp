#pragma once

// Pairwise fault scenarios between a monitoring node A and a monitored node B,
// their relative inconsistency costs, and the aggregate cost over many pairs.
//
// Time is counted in epochs 1..T. Every duration is measured on a half-open
// window (start, end]: the epoch of the triggering event is excluded and the
// closing epoch is included. Under that convention each closed-form ratio is
// exactly an epoch count from pair_state_at() divided by the stream's
// maximum window length, which count_state_windows() verifies.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace selfheal {

using Epoch = std::int64_t;

struct PairRecord {
  Epoch runtime_T = 0;
  Epoch threshold_t = 1;
  std::optional<Epoch> fault_A;      // monitor failure epoch
  std::optional<Epoch> fault_B;      // monitored failure epoch
  std::optional<Epoch> detection_d;  // first firing while A is alive
};

/// Throws std::invalid_argument naming the first violated invariant.
inline void validate(const PairRecord& r) {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("PairRecord: ") + what); };
  if (r.runtime_T < 1) fail("runtime_T must be >= 1");
  if (r.threshold_t < 1 || r.threshold_t > r.runtime_T) fail("threshold_t must lie in [1, runtime_T]");
  auto in_range = [&](const std::optional<Epoch>& e) { return !e || (*e >= 1 && *e <= r.runtime_T); };
  if (!in_range(r.fault_A)) fail("fault_A outside [1, runtime_T]");
  if (!in_range(r.fault_B)) fail("fault_B outside [1, runtime_T]");
  if (!in_range(r.detection_d)) fail("detection_d outside [1, runtime_T]");
  if (r.detection_d) {
    if (*r.detection_d < r.threshold_t) fail("detection_d earlier than threshold_t");
    if (r.fault_A && *r.detection_d >= *r.fault_A) fail("detection_d must precede fault_A");
  }
}

enum class ScenarioId : std::uint8_t { S1, S2, S3, S4, S5_1, S5_2, S6 };
inline constexpr std::size_t kScenarioCount = 7;

/// Six pair classes counted by scenario_frequencies (S5.1 and S5.2 merged).
enum class ScenarioClass : std::uint8_t { S1, S2, S3, S4, S5, S6 };
inline constexpr std::size_t kClassCount = 6;

enum class State : std::uint8_t { TN, TP, FN, FP, NONE };

enum class Polarity : std::uint8_t { FP, FN };

enum class Stream : std::uint8_t {
  S1_FP,
  S2_FP,
  S2_FN,
  S3_FP,
  S4_FP,
  S4_FN,
  S5_1_FP,
  S5_1_FN,
  S5_2_FN_LAG,
  S5_2_FN_POST,
  S6_FP,
  S6_FN,
};
inline constexpr std::size_t kStreamCount = 12;

struct StreamInfo {
  std::string_view label;
  ScenarioId scenario;
  Polarity polarity;
  /// FN streams whose closed form is identically one (monitor dead for the rest of the run).
  bool unit_fn;
};

inline constexpr std::array<StreamInfo, kStreamCount> kStreams{{
    {"S1-FP", ScenarioId::S1, Polarity::FP, false},
    {"S2-FP", ScenarioId::S2, Polarity::FP, false},
    {"S2-FN", ScenarioId::S2, Polarity::FN, false},
    {"S3-FP", ScenarioId::S3, Polarity::FP, false},
    {"S4-FP", ScenarioId::S4, Polarity::FP, false},
    {"S4-FN", ScenarioId::S4, Polarity::FN, true},
    {"S5.1-FP", ScenarioId::S5_1, Polarity::FP, false},
    {"S5.1-FN", ScenarioId::S5_1, Polarity::FN, true},
    {"S5.2-FN-lag", ScenarioId::S5_2, Polarity::FN, false},
    {"S5.2-FN-post", ScenarioId::S5_2, Polarity::FN, true},
    {"S6-FP", ScenarioId::S6, Polarity::FP, false},
    {"S6-FN", ScenarioId::S6, Polarity::FN, true},
}};

inline constexpr const StreamInfo& info(Stream s) { return kStreams[static_cast<std::size_t>(s)]; }

inline constexpr std::string_view scenario_name(ScenarioId s) {
  constexpr std::array<std::string_view, kScenarioCount> names{"S1", "S2", "S3", "S4", "S5.1", "S5.2", "S6"};
  return names[static_cast<std::size_t>(s)];
}

inline constexpr std::string_view class_name(ScenarioClass c) {
  constexpr std::array<std::string_view, kClassCount> names{"S1", "S2", "S3", "S4", "S5", "S6"};
  return names[static_cast<std::size_t>(c)];
}

inline constexpr std::string_view state_name(State s) {
  constexpr std::array<std::string_view, 5> names{"TN", "TP", "FN", "FP", "NONE"};
  return names[static_cast<std::size_t>(s)];
}

inline constexpr ScenarioClass class_of(ScenarioId s) {
  switch (s) {
    case ScenarioId::S1: return ScenarioClass::S1;
    case ScenarioId::S2: return ScenarioClass::S2;
    case ScenarioId::S3: return ScenarioClass::S3;
    case ScenarioId::S4: return ScenarioClass::S4;
    case ScenarioId::S5_1:
    case ScenarioId::S5_2: return ScenarioClass::S5;
    case ScenarioId::S6: return ScenarioClass::S6;
  }
  return ScenarioClass::S1;
}

/// Which of the seven fault scenarios a pair falls into. A missing detection
/// with F_B < F_A counts as late detection (S5.2): the fault of B is never
/// corrected before A dies. A tie d == F_B is treated as detection before the fault.
inline ScenarioId classify_scenario(const PairRecord& r) {
  const auto& fa = r.fault_A;
  const auto& fb = r.fault_B;
  if (!fa && !fb) return ScenarioId::S1;
  if (!fa) return ScenarioId::S2;
  if (!fb) return ScenarioId::S3;
  if (*fa < *fb) return ScenarioId::S4;
  if (*fa == *fb) return ScenarioId::S6;
  if (r.detection_d && *r.detection_d <= *fb) return ScenarioId::S5_1;
  return ScenarioId::S5_2;
}

/// Outcome of the pair at epoch tau. A failure at epoch F is still "alive" at F
/// and takes effect from F + 1; the same holds for the detection epoch d.
inline State pair_state_at(const PairRecord& r, Epoch tau) {
  const bool b_faulty = r.fault_B && tau > *r.fault_B;
  const bool a_alive = !r.fault_A || tau <= *r.fault_A;
  const bool detected = r.detection_d && *r.detection_d < tau;
  if (b_faulty) {
    return (detected && a_alive) ? State::TP : State::FN;
  }
  if (!a_alive) return State::NONE;
  return detected ? State::FP : State::TN;
}

struct CostBreakdown {
  std::array<double, kStreamCount> rho{};

  double operator[](Stream s) const { return rho[static_cast<std::size_t>(s)]; }
  double& operator[](Stream s) { return rho[static_cast<std::size_t>(s)]; }
};

namespace detail {

/// Length of the window (start, end] divided by the length of (lo, max_end],
/// zero when either window is empty.
inline double window_ratio(Epoch start, Epoch end, Epoch lo, Epoch max_end) {
  const Epoch num = end - start;
  const Epoch den = max_end - lo;
  if (num <= 0 || den <= 0) return 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

/// Closed-form relative costs. Streams outside the record's scenario are zero.
inline CostBreakdown relative_costs(const PairRecord& r) {
  CostBreakdown c;
  const Epoch T = r.runtime_T;
  const Epoch t = r.threshold_t;
  // A false positive lasts from detection until `end`; its maximum lasts from t.
  auto fp = [&](Epoch end) { return r.detection_d ? detail::window_ratio(*r.detection_d, end, t, end) : 0.0; };

  switch (classify_scenario(r)) {
    case ScenarioId::S1:
      c[Stream::S1_FP] = fp(T);
      break;
    case ScenarioId::S2: {
      const Epoch fb = *r.fault_B;
      c[Stream::S2_FP] = fp(fb);
      const Epoch d = r.detection_d.value_or(T);
      c[Stream::S2_FN] = detail::window_ratio(fb, d, fb, T);
      break;
    }
    case ScenarioId::S3:
      c[Stream::S3_FP] = fp(*r.fault_A);
      break;
    case ScenarioId::S4:
      c[Stream::S4_FP] = fp(*r.fault_A);
      c[Stream::S4_FN] = detail::window_ratio(*r.fault_B, T, *r.fault_B, T);
      break;
    case ScenarioId::S5_1:
      c[Stream::S5_1_FP] = fp(*r.fault_B);
      c[Stream::S5_1_FN] = detail::window_ratio(*r.fault_A, T, *r.fault_A, T);
      break;
    case ScenarioId::S5_2: {
      const Epoch fa = *r.fault_A;
      const Epoch fb = *r.fault_B;
      const Epoch d = r.detection_d.value_or(fa);
      c[Stream::S5_2_FN_LAG] = detail::window_ratio(fb, d, fb, fa);
      c[Stream::S5_2_FN_POST] = detail::window_ratio(fa, T, fa, T);
      break;
    }
    case ScenarioId::S6:
      c[Stream::S6_FP] = fp(*r.fault_B);
      c[Stream::S6_FN] = detail::window_ratio(*r.fault_A, T, *r.fault_A, T);
      break;
  }
  return c;
}

/// Epoch-by-epoch evaluation of the same costs: walks tau = 1..T through
/// pair_state_at(), attributes every FP/FN epoch to a stream, and divides by
/// the maximum window of that stream (also counted epoch by epoch).
inline CostBreakdown count_state_windows(const PairRecord& r) {
  const ScenarioId s = classify_scenario(r);
  const Epoch T = r.runtime_T;
  const Epoch t = r.threshold_t;

  std::optional<Stream> fp_stream;
  std::optional<Stream> fn_stream;
  Epoch fp_end = 0;  // maximum FP window is (t, fp_end]
  switch (s) {
    case ScenarioId::S1: fp_stream = Stream::S1_FP; fp_end = T; break;
    case ScenarioId::S2: fp_stream = Stream::S2_FP; fn_stream = Stream::S2_FN; fp_end = *r.fault_B; break;
    case ScenarioId::S3: fp_stream = Stream::S3_FP; fp_end = *r.fault_A; break;
    case ScenarioId::S4: fp_stream = Stream::S4_FP; fn_stream = Stream::S4_FN; fp_end = *r.fault_A; break;
    case ScenarioId::S5_1: fp_stream = Stream::S5_1_FP; fn_stream = Stream::S5_1_FN; fp_end = *r.fault_B; break;
    case ScenarioId::S5_2: break;
    case ScenarioId::S6: fp_stream = Stream::S6_FP; fn_stream = Stream::S6_FN; fp_end = *r.fault_B; break;
  }

  std::array<Epoch, kStreamCount> hits{};
  std::array<Epoch, kStreamCount> span{};
  auto idx = [](Stream x) { return static_cast<std::size_t>(x); };

  for (Epoch tau = 1; tau <= T; ++tau) {
    const State st = pair_state_at(r, tau);
    if (fp_stream && tau > t && tau <= fp_end) ++span[idx(*fp_stream)];
    if (st == State::FP && fp_stream) ++hits[idx(*fp_stream)];

    const bool b_faulty = r.fault_B && tau > *r.fault_B;
    if (!b_faulty) continue;
    if (s == ScenarioId::S5_2) {
      const Stream which = tau <= *r.fault_A ? Stream::S5_2_FN_LAG : Stream::S5_2_FN_POST;
      ++span[idx(which)];
      if (st == State::FN) ++hits[idx(which)];
    } else if (fn_stream) {
      // FN windows open at F_B (A healthy or A died first) or at F_A (A died after B).
      const Epoch open = (s == ScenarioId::S2 || s == ScenarioId::S4) ? *r.fault_B : *r.fault_A;
      if (tau > open) ++span[idx(*fn_stream)];
      if (st == State::FN) ++hits[idx(*fn_stream)];
    }
  }

  CostBreakdown c;
  for (std::size_t i = 0; i < kStreamCount; ++i) {
    c.rho[i] = span[i] > 0 ? static_cast<double>(hits[i]) / static_cast<double>(span[i]) : 0.0;
  }
  return c;
}

struct CostWeights {
  std::array<double, kScenarioCount> eps_fp;
  std::array<double, kScenarioCount> eps_fn;

  CostWeights() { eps_fp.fill(1.0); eps_fn.fill(1.0); }

  double weight(Stream s) const {
    const auto& si = info(s);
    const auto k = static_cast<std::size_t>(si.scenario);
    return si.polarity == Polarity::FP ? eps_fp[k] : eps_fn[k];
  }
};

inline void validate(const CostWeights& w) {
  for (std::size_t i = 0; i < kScenarioCount; ++i) {
    if (!(w.eps_fp[i] >= 0.0) || !(w.eps_fn[i] >= 0.0)) {
      throw std::invalid_argument("CostWeights: weights must be non-negative");
    }
  }
}

struct CostSummary {
  double c_total = 0.0;
  double c_fn = 0.0;
  double c_fp = 0.0;

  CostSummary& operator+=(const CostSummary& o) {
    c_total += o.c_total;
    c_fn += o.c_fn;
    c_fp += o.c_fp;
    return *this;
  }
};

/// Weighted cost of one breakdown; `scale` multiplies individual streams (used by calibration).
inline CostSummary weighted_cost(const CostBreakdown& b, const CostWeights& w,
                                 const std::array<double, kStreamCount>& scale) {
  CostSummary out;
  for (std::size_t i = 0; i < kStreamCount; ++i) {
    const auto s = static_cast<Stream>(i);
    const double v = w.weight(s) * scale[i] * b.rho[i];
    (info(s).polarity == Polarity::FP ? out.c_fp : out.c_fn) += v;
  }
  out.c_total = out.c_fn + out.c_fp;
  return out;
}

inline CostSummary weighted_cost(const CostBreakdown& b, const CostWeights& w) {
  std::array<double, kStreamCount> ones;
  ones.fill(1.0);
  return weighted_cost(b, w, ones);
}

/// Sum of per-stream costs over many pairs; enough to evaluate any weighting later.
struct StreamTotals {
  std::array<double, kStreamCount> sum{};
  std::uint64_t pairs = 0;

  void add(const CostBreakdown& b) {
    for (std::size_t i = 0; i < kStreamCount; ++i) sum[i] += b.rho[i];
    ++pairs;
  }

  CostBreakdown as_breakdown() const {
    CostBreakdown b;
    b.rho = sum;
    return b;
  }
};

inline CostSummary total_cost(std::span<const PairRecord> records, const CostWeights& weights = {}) {
  StreamTotals totals;
  for (const auto& r : records) totals.add(relative_costs(r));
  return weighted_cost(totals.as_breakdown(), weights);
}

using ClassCounts = std::map<ScenarioClass, std::uint64_t>;

/// Pair counts per scenario class when every node monitors every other node and
/// m batches of k nodes fail at distinct epochs.
inline ClassCounts scenario_frequencies(std::uint64_t n, std::uint64_t m, std::uint64_t k) {
  if (n < 2) throw std::invalid_argument("scenario_frequencies: n must be >= 2");
  if (m * k > n) throw std::invalid_argument("scenario_frequencies: m*k exceeds n");
  const std::uint64_t faulty = m * k;
  const std::uint64_t healthy = n - faulty;
  const std::uint64_t cross = m * k * k * (m == 0 ? 0 : m - 1) / 2;
  return {
      {ScenarioClass::S1, healthy * (healthy == 0 ? 0 : healthy - 1)},
      {ScenarioClass::S2, faulty * healthy},
      {ScenarioClass::S3, faulty * healthy},
      {ScenarioClass::S4, cross},
      {ScenarioClass::S5, cross},
      {ScenarioClass::S6, m * k * (k == 0 ? 0 : k - 1)},
  };
}

struct RecoveryModel {
  Epoch correction_duration_c = 0;
  Epoch recovery_time_R = 0;
  Epoch propagation_time_p = 0;
};

/// True when waiting out the failure is free: the node is back and visible
/// before any correction would have finished.
inline bool tolerance_is_costless(Epoch fault_B, Epoch threshold_t, const RecoveryModel& m) {
  if (fault_B < 0 || threshold_t < 0 || m.correction_duration_c < 0 || m.recovery_time_R < 0 ||
      m.propagation_time_p < 0) {
    throw std::invalid_argument("tolerance_is_costless: inputs must be non-negative");
  }
  return fault_B + threshold_t + m.correction_duration_c > m.recovery_time_R + m.propagation_time_p;
}

}  // namespace selfheal
