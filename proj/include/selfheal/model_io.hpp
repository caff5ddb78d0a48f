#pragma once

// Reading calibration inputs from sweep outputs, fitting the four calibrator
// kinds, and model/report JSON.

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "selfheal/calibration.hpp"
#include "selfheal/config.hpp"
#include "selfheal/csv.hpp"
#include "selfheal/experiments.hpp"

namespace selfheal {

enum class CalibrationMethod { none, fn_lambda, ols, elastic_net };

inline CalibrationMethod parse_method(const std::string& s) {
  if (s == "none") return CalibrationMethod::none;
  if (s == "fn-lambda") return CalibrationMethod::fn_lambda;
  if (s == "ols") return CalibrationMethod::ols;
  if (s == "elastic-net") return CalibrationMethod::elastic_net;
  throw ConfigError("method", "expected none, fn-lambda, ols or elastic-net");
}

inline std::string method_name(CalibrationMethod m) {
  switch (m) {
    case CalibrationMethod::none: return "none";
    case CalibrationMethod::fn_lambda: return "fn-lambda";
    case CalibrationMethod::ols: return "ols";
    case CalibrationMethod::elastic_net: return "elastic-net";
  }
  return "?";
}

inline std::string key_profile(const std::string& key) { return key.substr(0, key.find('/')); }

inline double key_scale(const std::string& key) {
  const auto a = key.find('/');
  const auto b = key.find('/', a + 1);
  return parse_double(key.substr(a + 1, b - a - 1));
}

inline std::map<std::string, FeatureVector> load_features(const CsvTable& t) {
  if (t.header != features_header()) throw DataError("features: header must be setting_key,f00..f59,rel_threshold,scale");
  std::map<std::string, FeatureVector> out;
  for (const auto& row : t.rows) {
    FeatureVector f{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) f[i] = parse_double(row[i + 1]);
    out[row[0]] = f;
  }
  return out;
}

/// Accepts `setting_key,target` or a results table (profile, scale, threshold, app_error).
inline std::map<std::string, double> load_targets(const CsvTable& t) {
  std::map<std::string, double> out;
  const auto has = [&](const char* c) { return std::find(t.header.begin(), t.header.end(), c) != t.header.end(); };
  if (has("setting_key") && has("target")) {
    const auto k = t.column("setting_key"), v = t.column("target");
    for (const auto& row : t.rows) out[row[k]] = parse_double(row[v]);
    return out;
  }
  const auto p = t.column("profile"), s = t.column("scale"), th = t.column("threshold"), e = t.column("app_error");
  for (const auto& row : t.rows) {
    out[setting_key(parse_profile(row[p]), parse_double(row[s]), parse_int(row[th]))] = parse_double(row[e]);
  }
  return out;
}

inline std::map<std::string, StreamTotals> load_stream_costs(const CsvTable& t) {
  std::map<std::string, StreamTotals> out;
  if (t.header.size() != kStreamCount + 2 || t.header[0] != "setting_key" || t.header[1] != "pairs") {
    throw DataError("stream costs: header must be setting_key,pairs and the 12 stream labels");
  }
  for (const auto& row : t.rows) {
    StreamTotals s;
    s.pairs = static_cast<std::uint64_t>(parse_int(row[1]));
    for (std::size_t i = 0; i < kStreamCount; ++i) s.sum[i] = parse_double(row[i + 2]);
    out[row[0]] = s;
  }
  return out;
}

/// Rows whose key appears in every input; any key missing from one side aborts with the list.
struct CalibrationData {
  std::vector<SettingRow> rows;
  std::vector<StreamTotals> costs;  // aligned with rows when costs were given
};

inline CalibrationData align_inputs(const std::map<std::string, FeatureVector>& features,
                                    const std::map<std::string, double>& targets,
                                    const std::map<std::string, StreamTotals>* costs) {
  std::vector<std::string> missing;
  for (const auto& [k, v] : features) {
    if (!targets.count(k)) missing.push_back(k + " (no target)");
    if (costs && !costs->count(k)) missing.push_back(k + " (no stream costs)");
  }
  for (const auto& [k, v] : targets) {
    if (!features.count(k)) missing.push_back(k + " (no features)");
  }
  if (!missing.empty()) {
    std::string msg = "key mismatch:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  CalibrationData d;
  for (const auto& [k, f] : features) {
    const double y = targets.at(k);
    if (std::isnan(y)) continue;  // failed setting
    d.rows.push_back({k, key_profile(k), key_scale(k), f, y});
    if (costs) d.costs.push_back(costs->at(k));
  }
  return d;
}

inline nlohmann::json vec_json(const Eigen::VectorXd& v) {
  auto a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd json_vec(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

struct FittedModel {
  nlohmann::json model;
  PredictionReport report;
  std::vector<GeneralizationResult> generalization;
};

inline double predict_row(const nlohmann::json& model, const SettingRow& row, const StreamTotals* cost) {
  const auto m = parse_method(model.at("method").get<std::string>());
  if (m == CalibrationMethod::none || m == CalibrationMethod::fn_lambda) {
    if (!cost) throw DataError("method " + method_name(m) + " needs stream costs (--costs)");
    double lambda = 1.0;
    if (m == CalibrationMethod::fn_lambda) {
      const auto& by = model.at("lambda_by_scale");
      const auto s = scale_text(row.fault_scale);
      if (!by.contains(s)) throw DataError(row.key + ": no lambda fitted for scale " + s);
      lambda = by.at(s).get<double>();
    }
    CostedSetting cs{row.fault_scale, *cost};
    return cs.predicted(lambda);
  }
  LinearModel lm;
  lm.coefficients = json_vec(model.at("coefficients"));
  lm.intercept = model.at("intercept").get<double>();
  return lm.predict(row.features);
}

inline nlohmann::json linear_json(const LinearModel& m) {
  nlohmann::json j;
  j["coefficients"] = vec_json(m.coefficients);
  j["intercept"] = m.intercept;
  j["feature_means"] = vec_json(m.feature_means);
  j["feature_scales"] = vec_json(m.feature_scales);
  j["converged"] = m.converged;
  j["sweeps"] = m.sweeps;
  j["rank_deficient"] = m.rank_deficient;
  return j;
}

inline nlohmann::json report_json(const PredictionReport& r) {
  nlohmann::json j;
  j["rmse"] = r.rmse;
  j["pearson_r"] = r.pearson_r ? nlohmann::json(*r.pearson_r) : nlohmann::json(nullptr);
  j["accuracy_loss"] = r.accuracy_loss ? nlohmann::json(*r.accuracy_loss) : nlohmann::json(nullptr);
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"setting_key", row.key}, {"predicted", row.predicted}, {"target", row.target},
                         {"method", row.method}});
  }
  return j;
}

/// Fits one calibrator. Elastic net with `train_profiles` reports on the other
/// profiles (all profiles when training covers them all) plus the full
/// train/validate combination table.
inline FittedModel fit_model(CalibrationMethod method, const CalibrationData& data, const CalibrationConfig& cfg,
                             const std::vector<std::string>& train_profiles = {}) {
  if (data.rows.empty()) throw DataError("no calibration rows");
  FittedModel out;
  auto& j = out.model;
  j["method"] = method_name(method);
  j["feature_names"] = nlohmann::json::array();
  for (std::size_t i = 0; i < kFeatureCount; ++i) j["feature_names"].push_back(feature_name(i));
  j["normalization"] = "cost per ordered pair";
  j["quantile_population"] = "pairs of the stream's scenario, zero-cost pairs included";
  j["config"] = {{"lambda_grid", cfg.lambda_grid},
                 {"elastic_alpha", cfg.elastic_alpha},
                 {"elastic_l1_ratio", cfg.elastic_l1_ratio}};

  const bool needs_costs = method == CalibrationMethod::none || method == CalibrationMethod::fn_lambda;
  if (needs_costs && data.costs.size() != data.rows.size()) {
    throw DataError("method " + method_name(method) + " needs stream costs (--costs)");
  }

  std::vector<std::size_t> eval(data.rows.size());
  for (std::size_t i = 0; i < eval.size(); ++i) eval[i] = i;

  if (method == CalibrationMethod::fn_lambda) {
    std::vector<CostedSetting> cs;
    std::vector<double> y;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      cs.push_back({data.rows[i].fault_scale, data.costs[i]});
      y.push_back(data.rows[i].target);
    }
    const auto best = fit_lambda(cs, y, cfg.lambda_grid);
    j["lambda_by_scale"] = nlohmann::json::object();
    for (const auto& [s, l] : best) j["lambda_by_scale"][scale_text(s)] = l;
  } else if (method == CalibrationMethod::ols) {
    j.update(linear_json(ols_fit(design_matrix(data.rows), target_vector(data.rows))));
  } else if (method == CalibrationMethod::elastic_net) {
    std::vector<std::string> train = train_profiles;
    std::set<std::string> all;
    for (const auto& r : data.rows) all.insert(r.profile);
    if (train.empty()) train.assign(all.begin(), all.end());
    std::vector<SettingRow> tr;
    for (const auto& r : data.rows) {
      if (std::find(train.begin(), train.end(), r.profile) != train.end()) tr.push_back(r);
    }
    if (tr.empty()) throw DataError("no settings in the training profiles");
    const LinearModel en = elastic_net_fit(design_matrix(tr), target_vector(tr), cfg.elastic_alpha,
                                           cfg.elastic_l1_ratio);
    j.update(linear_json(en));
    j["train_profiles"] = train;

    std::vector<std::string> validate;
    for (const auto& p : all) {
      if (std::find(train.begin(), train.end(), p) == train.end()) validate.push_back(p);
    }
    if (validate.empty()) validate.assign(all.begin(), all.end());
    eval.clear();
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      if (std::find(validate.begin(), validate.end(), data.rows[i].profile) != validate.end()) eval.push_back(i);
    }
    std::vector<std::string> profiles(all.begin(), all.end());
    out.generalization = generalization_sweep(profiles, data.rows, cfg.elastic_alpha, cfg.elastic_l1_ratio);
  }

  std::vector<PredictionRow> rows;
  std::vector<double> c_r;
  const LinearModel reg = ols_fit(design_matrix(data.rows), target_vector(data.rows));
  for (std::size_t i : eval) {
    const auto& r = data.rows[i];
    rows.push_back({r.key, predict_row(j, r, needs_costs ? &data.costs[i] : nullptr), r.target, method_name(method)});
    c_r.push_back(reg.predict(r.features));
  }
  out.report = make_report(std::move(rows));
  if (method == CalibrationMethod::elastic_net) {
    std::vector<double> c_gr;
    for (const auto& r : out.report.rows) c_gr.push_back(r.predicted);
    out.report.accuracy_loss = out.report.rmse - rmse(c_gr, c_r);
  }
  return out;
}

inline std::string generalization_csv(std::span<const GeneralizationResult> g) {
  CsvWriter w({"train_profiles", "validate_profile", "rmse_vs_target", "rmse_vs_regression", "accuracy_loss"});
  for (const auto& x : g) {
    std::string t;
    for (const auto& p : x.train_profiles) t += (t.empty() ? "" : "+") + p;
    w.add(t, x.validate_profile, x.report.rmse, x.rmse_vs_regression, x.report.accuracy_loss.value_or(0.0));
  }
  return w.str();
}

inline std::string predictions_csv(std::span<const PredictionRow> rows) {
  CsvWriter w({"setting_key", "predicted", "target", "method"});
  for (const auto& r : rows) w.add(r.key, r.predicted, r.target, r.method);
  return w.str();
}

}  // namespace selfheal
