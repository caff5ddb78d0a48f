#pragma once

// Calibrators that map application-independent fault-scenario costs onto the
// error observed by an application: a single factor on the "monitor is dead"
// false-negative streams, ordinary least squares on quantile features, and an
// elastic net trained on a subset of fault profiles.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfheal/fault_model.hpp"

namespace selfheal {

inline constexpr std::array<double, 5> kFeatureQuantiles{0.10, 0.30, 0.50, 0.70, 0.90};
inline constexpr std::size_t kFeatureCount = kStreamCount * kFeatureQuantiles.size() + 2;  // 62

using FeatureVector = std::array<double, kFeatureCount>;

/// Linear interpolation between order statistics at position p * (n - 1).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

using StreamPopulations = std::array<std::vector<double>, kStreamCount>;

/// Builds the 62 features: five quantiles of every stream's per-pair cost
/// population, then threshold / max_threshold and the fault scale.
inline FeatureVector extract_features(StreamPopulations populations, double threshold, double max_threshold,
                                      double fault_scale) {
  FeatureVector f{};
  std::size_t k = 0;
  for (auto& pop : populations) {
    std::sort(pop.begin(), pop.end());
    for (double q : kFeatureQuantiles) f[k++] = quantile_sorted(pop, q);
  }
  f[k++] = max_threshold > 0.0 ? threshold / max_threshold : 0.0;
  f[k++] = fault_scale;
  return f;
}

inline std::string feature_name(std::size_t i) {
  if (i == kFeatureCount - 2) return "rel_threshold";
  if (i == kFeatureCount - 1) return "scale";
  std::string s = "f";
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

struct CalibrationConfig {
  double lambda = 1.0;
  std::vector<double> lambda_grid = default_lambda_grid();
  double elastic_alpha = 0.07;
  double elastic_l1_ratio = 0.05;

  static std::vector<double> default_lambda_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 20; ++i) g.push_back(i * 0.05);
    return g;
  }
};

inline void validate(const CalibrationConfig& c) {
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  for (double l : c.lambda_grid) {
    if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("lambda_grid values must lie in [0, 1]");
  }
  if (!(c.elastic_alpha >= 0.0)) throw std::invalid_argument("elastic_alpha must be >= 0");
  if (!(c.elastic_l1_ratio >= 0.0 && c.elastic_l1_ratio <= 1.0)) {
    throw std::invalid_argument("elastic_l1_ratio must lie in [0, 1]");
  }
}

/// Cost with the always-one FN streams (monitor failed after or with the
/// target) scaled by lambda. lambda = 1 gives the uncalibrated total.
inline CostSummary fn_calibrated_cost(const CostBreakdown& stream_sums, double lambda,
                                      const CostWeights& weights = {}) {
  std::array<double, kStreamCount> scale;
  for (std::size_t i = 0; i < kStreamCount; ++i) scale[i] = kStreams[i].unit_fn ? lambda : 1.0;
  return weighted_cost(stream_sums, weights, scale);
}

inline CostSummary fn_calibrated_cost(std::span<const PairRecord> records, double lambda,
                                      const CostWeights& weights = {}) {
  StreamTotals t;
  for (const auto& r : records) t.add(relative_costs(r));
  return fn_calibrated_cost(t.as_breakdown(), lambda, weights);
}

inline double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmse: inputs must be non-empty and equal length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

/// Pearson correlation; nullopt when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need two equal-length samples");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Per-setting input of the lambda calibrator: stream sums and pair count.
struct CostedSetting {
  double fault_scale = 0.0;
  StreamTotals totals;

  double predicted(double lambda) const {
    const double c = fn_calibrated_cost(totals.as_breakdown(), lambda).c_total;
    return totals.pairs > 0 ? c / static_cast<double>(totals.pairs) : 0.0;
  }
};

/// RMSE of the per-pair calibrated cost against targets for one lambda.
inline double lambda_rmse(std::span<const CostedSetting> settings, std::span<const double> targets, double lambda) {
  std::vector<double> pred;
  pred.reserve(settings.size());
  for (const auto& s : settings) pred.push_back(s.predicted(lambda));
  return rmse(pred, targets);
}

/// Grid lambda with the lowest RMSE, separately for every fault scale. Ties go to the smaller lambda.
inline std::map<double, double> fit_lambda(std::span<const CostedSetting> settings, std::span<const double> targets,
                                           std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("fit_lambda: empty lambda grid");
  if (settings.size() != targets.size()) throw std::invalid_argument("fit_lambda: settings/targets length mismatch");
  std::vector<double> sorted_grid(grid.begin(), grid.end());
  std::sort(sorted_grid.begin(), sorted_grid.end());

  std::map<double, std::pair<std::vector<CostedSetting>, std::vector<double>>> by_scale;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    auto& slot = by_scale[settings[i].fault_scale];
    slot.first.push_back(settings[i]);
    slot.second.push_back(targets[i]);
  }
  std::map<double, double> best;
  for (const auto& [scale, group] : by_scale) {
    double best_lambda = sorted_grid.front();
    double best_err = lambda_rmse(group.first, group.second, best_lambda);
    for (double l : sorted_grid) {
      const double e = lambda_rmse(group.first, group.second, l);
      if (e < best_err) {
        best_err = e;
        best_lambda = l;
      }
    }
    best[scale] = best_lambda;
  }
  return best;
}

/// Affine model in original feature units: y = intercept + coefficients . x
struct LinearModel {
  std::string method;
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  Eigen::VectorXd feature_means;   // standardization used while fitting (elastic net)
  Eigen::VectorXd feature_scales;
  bool converged = true;
  bool rank_deficient = false;
  std::size_t sweeps = 0;

  double predict(std::span<const double> x) const {
    double y = intercept;
    for (Eigen::Index j = 0; j < coefficients.size(); ++j) y += coefficients[j] * x[static_cast<std::size_t>(j)];
    return y;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    return (X * coefficients).array() + intercept;
  }
};

/// Least squares with an unpenalized intercept, solved by a complete
/// orthogonal decomposition; rank-deficient designs get the minimum-norm solution.
inline LinearModel ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size() || X.rows() == 0) throw std::invalid_argument("ols_fit: X and y must have matching rows");
  // Centering first keeps the intercept out of the minimum-norm objective.
  const Eigen::RowVectorXd mx = X.colwise().mean();
  const double my = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - my;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Xc);
  LinearModel m;
  m.method = "ols";
  m.coefficients = cod.solve(yc);
  m.intercept = my - mx.dot(m.coefficients);
  m.rank_deficient = cod.rank() < X.cols();
  m.feature_means = mx.transpose();
  m.feature_scales = Eigen::VectorXd::Ones(X.cols());
  return m;
}

struct ElasticNetOptions {
  double tolerance = 1e-8;
  std::size_t max_sweeps = 100000;
};

/// Coordinate descent on
///   1/(2N) |y - b - Z w|^2 + alpha * (l1 |w|_1 + (1 - l1)/2 |w|^2)
/// with Z the standardized features (zero mean, unit population variance).
/// Constant columns get a zero coefficient. Coefficients are returned in original units.
inline LinearModel elastic_net_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha, double l1_ratio,
                                   ElasticNetOptions opt = {}) {
  if (X.rows() != y.size() || X.rows() == 0) throw std::invalid_argument("elastic_net_fit: X and y must match");
  if (alpha < 0.0 || l1_ratio < 0.0 || l1_ratio > 1.0) throw std::invalid_argument("elastic_net_fit: bad penalty");
  const auto n = static_cast<double>(X.rows());
  const Eigen::Index p = X.cols();

  const Eigen::VectorXd mean = X.colwise().mean().transpose();
  Eigen::VectorXd scale(p);
  Eigen::MatrixXd Z(X.rows(), p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd c = X.col(j).array() - mean[j];
    const double sd = std::sqrt(c.squaredNorm() / n);
    scale[j] = sd > 1e-12 ? sd : 0.0;
    Z.col(j) = scale[j] > 0.0 ? Eigen::VectorXd(c / scale[j]) : Eigen::VectorXd::Zero(X.rows());
  }
  const double ymean = y.mean();
  Eigen::VectorXd r = y.array() - ymean;  // residual for w = 0
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);

  const double l1 = alpha * l1_ratio;
  const double denom = 1.0 + alpha * (1.0 - l1_ratio);
  LinearModel m;
  m.method = "elastic-net";
  m.converged = false;
  for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (scale[j] == 0.0) continue;
      const double rho = Z.col(j).dot(r) / n + w[j];
      const double soft = std::copysign(std::max(std::abs(rho) - l1, 0.0), rho);
      const double next = soft / denom;
      const double delta = next - w[j];
      if (delta != 0.0) {
        r -= delta * Z.col(j);
        w[j] = next;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    m.sweeps = sweep;
    if (max_delta < opt.tolerance) {
      m.converged = true;
      break;
    }
  }

  m.coefficients = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale[j] > 0.0) m.coefficients[j] = w[j] / scale[j];
  }
  m.intercept = ymean - mean.dot(m.coefficients);
  m.feature_means = mean;
  m.feature_scales = scale;
  return m;
}

/// One row per experimental setting fed to the regressions.
struct SettingRow {
  std::string key;
  std::string profile;
  double fault_scale = 0.0;
  FeatureVector features{};
  double target = 0.0;
};

inline Eigen::MatrixXd design_matrix(std::span<const SettingRow> rows) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].features[j];
    }
  }
  return X;
}

inline Eigen::VectorXd target_vector(std::span<const SettingRow> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = rows[i].target;
  return y;
}

struct PredictionRow {
  std::string key;
  double predicted = 0.0;
  double target = 0.0;
  std::string method;
};

struct PredictionReport {
  std::vector<PredictionRow> rows;
  double rmse = 0.0;
  std::optional<double> pearson_r;
  std::optional<double> accuracy_loss;
};

inline PredictionReport make_report(std::vector<PredictionRow> rows) {
  PredictionReport rep;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) return rep;
  std::vector<double> p, t;
  for (const auto& r : rep.rows) {
    p.push_back(r.predicted);
    t.push_back(r.target);
  }
  rep.rmse = rmse(p, t);
  if (p.size() >= 2) rep.pearson_r = pearson(p, t);
  return rep;
}

struct GeneralizationResult {
  std::vector<std::string> train_profiles;
  std::string validate_profile;
  LinearModel model;
  PredictionReport report;  // accuracy_loss = RMSE(C_GR, C_D) - RMSE(C_GR, C_R)
  double rmse_vs_regression = 0.0;
};

/// Elastic net trained on `train` profiles, evaluated on each `validate`
/// profile against the application targets (C_D) and against the in-sample
/// OLS prediction over all settings (C_R).
inline std::vector<GeneralizationResult> generalized_regression(std::span<const std::string> train,
                                                                std::span<const std::string> validate,
                                                                std::span<const SettingRow> settings,
                                                                double alpha, double l1_ratio,
                                                                ElasticNetOptions opt = {}) {
  std::vector<SettingRow> train_rows;
  for (const auto& r : settings) {
    if (std::find(train.begin(), train.end(), r.profile) != train.end()) train_rows.push_back(r);
  }
  if (train_rows.empty()) throw std::invalid_argument("generalized_regression: no settings in the training profiles");

  const LinearModel reg = ols_fit(design_matrix(settings), target_vector(settings));
  const LinearModel gen = elastic_net_fit(design_matrix(train_rows), target_vector(train_rows), alpha, l1_ratio, opt);

  std::vector<GeneralizationResult> out;
  for (const auto& v : validate) {
    GeneralizationResult g;
    g.train_profiles.assign(train.begin(), train.end());
    g.validate_profile = v;
    g.model = gen;
    std::vector<PredictionRow> rows;
    std::vector<double> c_gr, c_r;
    for (const auto& r : settings) {
      if (r.profile != v) continue;
      const double pg = gen.predict(r.features);
      rows.push_back({r.key, pg, r.target, "elastic-net"});
      c_gr.push_back(pg);
      c_r.push_back(reg.predict(r.features));
    }
    g.report = make_report(std::move(rows));
    if (!c_gr.empty()) {
      g.rmse_vs_regression = rmse(c_gr, c_r);
      g.report.accuracy_loss = g.report.rmse - g.rmse_vs_regression;
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Every non-empty training subset of `profiles` against every single validation profile.
inline std::vector<GeneralizationResult> generalization_sweep(std::span<const std::string> profiles,
                                                              std::span<const SettingRow> settings, double alpha,
                                                              double l1_ratio, ElasticNetOptions opt = {}) {
  std::vector<GeneralizationResult> out;
  const std::size_t p = profiles.size();
  for (std::uint32_t mask = 1; mask < (1u << p); ++mask) {
    std::vector<std::string> train;
    for (std::size_t i = 0; i < p; ++i) {
      if (mask & (1u << i)) train.push_back(profiles[i]);
    }
    auto part = generalized_regression(train, profiles, settings, alpha, l1_ratio, opt);
    for (auto& g : part) out.push_back(std::move(g));
  }
  return out;
}

}  // namespace selfheal
