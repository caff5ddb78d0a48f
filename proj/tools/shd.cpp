// shd: command-line front end for profiling, aggregation runs, sweeps and calibration.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "selfheal/config.hpp"
#include "selfheal/csv.hpp"
#include "selfheal/dataset.hpp"
#include "selfheal/experiments.hpp"
#include "selfheal/model_io.hpp"

namespace fs = std::filesystem;
using namespace selfheal;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

std::string out_dir(const std::string& flag) {
  if (const char* env = std::getenv("SHD_OUT_DIR"); env && *env) return env;
  return flag;
}

std::string in_out(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError("config", e.what());
  }
  ExperimentConfig c = parse_config(parse_json_text(text, "config"));
  if (seed) c.seed = *seed;
  return c;
}

ConsumptionDataset load_data(const std::string& spec, std::size_t nodes, std::uint64_t seed) {
  if (spec.empty() || spec == "synthetic") return generate_synthetic(nodes, seed);
  if (spec.rfind("synthetic:", 0) == 0) return generate_synthetic(nodes, std::stoull(spec.substr(10)));
  return dataset_from_csv(read_file(spec), spec);
}

json run_metadata(const ExperimentConfig& c) {
  json m;
  m["nodes"] = c.nodes;
  m["epochs"] = c.epochs;
  m["epoch_duration"] = c.epoch_duration;
  m["bootstrap_epochs"] = c.bootstrap();
  m["seed"] = c.seed;
  m["reference_epochs"] = kReferenceEpochs;
  m["rescaled"] = c.epochs != kReferenceEpochs;
  m["thresholds_reference"] = c.thresholds;
  m["thresholds_epochs"] = c.scaled_thresholds();
  m["max_threshold_epochs"] = c.scaled(c.max_threshold);
  m["profile"] = profile_name(c.profile);
  m["fault_scale"] = c.fault_scale;
  m["batch_epochs"] = FaultProfileSpec{c.profile, c.fault_scale, c.epochs}.batch_epochs();
  m["quantile_population"] = "pairs of the stream's scenario, zero-cost pairs included";
  m["aggregation_period"] = c.app.aggregation_period;
  m["memory"] = c.app.memory == MemoryMode::exact ? "exact" : "bloom";
  return m;
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

int cmd_profile(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
                bool emit_pairs, bool per_scenario) {
  const auto c = load_config(config, seed);
  const auto profiles = run_profile(c, emit_pairs);
  std::vector<KeyedProfile> rows;
  for (const auto& p : profiles) {
    rows.push_back({setting_key(c.profile, c.fault_scale, p.threshold_ref), std::string(profile_name(c.profile)),
                    c.fault_scale, p.threshold_ref, &p});
  }
  const auto dir = out_dir(out);
  fs::create_directories(dir);
  write_file(in_out(dir, "frequencies.csv"), frequencies_csv(rows, per_scenario));
  write_file(in_out(dir, "cost_summary.csv"), cost_summary_csv(rows));
  write_file(in_out(dir, "pair_costs.csv"), emit_pairs ? pair_costs_csv(rows) : histogram_csv(rows));
  write_file(in_out(dir, "features.csv"), features_csv(rows));
  write_file(in_out(dir, "stream_costs.csv"), stream_costs_csv(rows));
  auto meta = run_metadata(c);
  meta["frequency_normalization"] = per_scenario ? "per scenario" : "all ordered pairs";
  meta["pair_costs"] = emit_pairs ? "per pair" : "histogram of 100 bins over [0, 2]";
  write_json(in_out(dir, "metadata.json"), meta);
  return 0;
}

int cmd_aggregate(const std::string& config, const std::string& data, const std::string& out,
                  std::optional<std::uint64_t> seed, bool no_correction) {
  auto c = load_config(config, seed);
  if (no_correction) c.app.correction = false;
  const auto ds = load_data(data, c.nodes, c.seed);
  const auto run = run_app_for(c, c.thresholds.front(), ds);
  const auto dir = out_dir(out);
  fs::create_directories(dir);
  write_file(in_out(dir, "timeseries.csv"), timeseries_csv(run.timeseries));
  write_file(in_out(dir, "events.csv"), events_csv(run.trace.events));
  auto meta = run_metadata(c);
  meta["data_source"] = ds.source;
  meta["correction"] = c.app.correction;
  meta["threshold_epochs"] = c.scaled(c.thresholds.front());
  meta["app_error"] = run.app_error;
  write_json(in_out(dir, "metadata.json"), meta);
  return 0;
}

int cmd_sweep(const std::string& spec_path, const std::string& data, const std::string& out,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> parallel) {
  std::string text;
  try {
    text = read_file(spec_path);
  } catch (const DataError& e) {
    throw ConfigError("spec", e.what());
  }
  auto spec = parse_sweep_spec(parse_json_text(text, "spec"));
  if (seed) spec.base.seed = *seed;
  const auto ds = load_data(data, spec.base.nodes, spec.base.seed);
  const auto results = run_sweep(spec, ds, parallel.value_or(spec.parallelism));

  std::vector<KeyedProfile> rows;
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.ok) {
      ++failed;
      std::cerr << "setting " << r.key() << " failed: " << r.error << "\n";
      continue;
    }
    rows.push_back({r.key(), std::string(profile_name(r.profile)), r.fault_scale, r.threshold_ref, &r.profiled});
  }
  const auto dir = out_dir(out);
  fs::create_directories(dir);
  write_file(in_out(dir, "results.csv"), results_csv(results));
  write_file(in_out(dir, "features.csv"), features_csv(rows));
  write_file(in_out(dir, "stream_costs.csv"), stream_costs_csv(rows));
  write_file(in_out(dir, "frequencies.csv"), frequencies_csv(rows));
  auto meta = run_metadata(spec.base);
  meta.erase("profile");
  meta.erase("fault_scale");
  meta.erase("batch_epochs");
  meta.erase("seed");
  meta["base_seed"] = spec.base.seed;
  meta["settings"] = results.size();
  meta["failed_settings"] = failed;
  meta["data_source"] = ds.source;
  meta["cost_columns"] = "sum over ordered pairs; divide by nodes*(nodes-1) for the per-pair cost";
  write_json(in_out(dir, "metadata.json"), meta);
  return 0;
}

CalibrationData load_calibration(const std::string& features, const std::string& targets, const std::string& costs) {
  const auto f = load_features(read_csv(features));
  const auto t = load_targets(read_csv(targets));
  std::map<std::string, StreamTotals> c;
  if (!costs.empty()) c = load_stream_costs(read_csv(costs));
  return align_inputs(f, t, costs.empty() ? nullptr : &c);
}

CalibrationConfig calibration_config(const std::string& config) {
  if (config.empty()) return {};
  return load_config(config, std::nullopt).calibration;
}

int cmd_calibrate(const std::string& features, const std::string& targets, const std::string& costs,
                  const std::string& method, const std::vector<std::string>& train, const std::string& config,
                  const std::string& out) {
  const auto m = parse_method(method);
  const auto cfg = calibration_config(config);
  const auto data = load_calibration(features, targets, costs);
  const auto fitted = fit_model(m, data, cfg, train);
  fs::path model_path(out);
  if (const char* env = std::getenv("SHD_OUT_DIR"); env && *env) model_path = fs::path(env) / model_path.filename();
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  write_json(model_path.string(), fitted.model);
  auto rep = report_json(fitted.report);
  rep["method"] = method;
  fs::path rep_path = model_path;
  rep_path.replace_extension(".report.json");
  write_json(rep_path.string(), rep);
  if (!fitted.generalization.empty()) {
    fs::path g = model_path;
    g.replace_extension(".generalization.csv");
    write_file(g.string(), generalization_csv(fitted.generalization));
  }
  std::cout << "rmse " << format_double(fitted.report.rmse);
  if (fitted.report.pearson_r) std::cout << " pearson_r " << format_double(*fitted.report.pearson_r);
  if (fitted.report.accuracy_loss) std::cout << " accuracy_loss " << format_double(*fitted.report.accuracy_loss);
  std::cout << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& features, const std::string& costs,
                const std::string& targets, const std::string& out) {
  const json model = parse_json_text(read_file(model_path), "model");
  if (!model.contains("method")) throw ConfigError("model.method", "missing");
  const auto f = load_features(read_csv(features));
  std::map<std::string, double> t;
  if (!targets.empty()) t = load_targets(read_csv(targets));
  std::map<std::string, StreamTotals> c;
  if (!costs.empty()) c = load_stream_costs(read_csv(costs));
  std::vector<PredictionRow> rows;
  std::vector<std::string> missing;
  for (const auto& [k, feat] : f) {
    if (!costs.empty() && !c.count(k)) missing.push_back(k);
  }
  if (!missing.empty()) {
    std::string msg = "key mismatch: missing stream costs for";
    for (const auto& k : missing) msg += " " + k;
    throw DataError(msg);
  }
  for (const auto& [k, feat] : f) {
    SettingRow r{k, key_profile(k), key_scale(k), feat, t.count(k) ? t.at(k) : std::nan("")};
    rows.push_back({k, predict_row(model, r, costs.empty() ? nullptr : &c.at(k)), r.target,
                    model.at("method").get<std::string>()});
  }
  std::string path = out;
  if (const char* env = std::getenv("SHD_OUT_DIR"); env && *env) path = (fs::path(env) / fs::path(out).filename()).string();
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_file(path, predictions_csv(rows));
  return 0;
}

int cmd_gen_data(std::size_t nodes, std::uint64_t seed, const std::string& out) {
  std::string path = out;
  if (const char* env = std::getenv("SHD_OUT_DIR"); env && *env) path = (fs::path(env) / fs::path(out).filename()).string();
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_file(path, dataset_to_csv(generate_synthetic(nodes, seed)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-healing inconsistency cost profiling and calibration"};
  app.require_subcommand(1);

  std::string config, out, data, spec, features, targets, costs, method = "none", model, model_out;
  std::vector<std::string> train;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
  bool emit_pairs = false, per_scenario = false, no_correction = false;
  std::size_t nodes = 0;
  std::uint64_t data_seed = 1;

  auto* profile = app.add_subcommand("profile", "Profile inconsistency costs of one configuration");
  profile->add_option("--config", config, "JSON configuration")->required();
  profile->add_option("--out", out, "Output directory")->required();
  profile->add_option("--seed", seed, "Override the configured seed");
  profile->add_flag("--emit-pairs", emit_pairs, "Write one row per pair instead of a histogram");
  profile->add_flag("--per-scenario", per_scenario, "Normalize stream frequencies by scenario size");

  auto* aggregate = app.add_subcommand("aggregate", "Run the aggregation application");
  aggregate->add_option("--config", config, "JSON configuration")->required();
  aggregate->add_option("--data", data, "Dataset CSV, 'synthetic' or 'synthetic:<seed>'")->required();
  aggregate->add_option("--out", out, "Output directory")->required();
  aggregate->add_option("--seed", seed, "Override the configured seed");
  aggregate->add_flag("--no-correction", no_correction, "Disable self-healing agents");

  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->add_option("--spec", spec, "JSON sweep specification")->required();
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--data", data, "Dataset CSV, 'synthetic' or 'synthetic:<seed>'");
  sweep->add_option("--parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "Override the base seed");

  auto* calibrate = app.add_subcommand("calibrate", "Fit a cost calibrator");
  calibrate->add_option("--features", features, "features.csv")->required();
  calibrate->add_option("--targets", targets, "Targets CSV (setting_key,target or results.csv)")->required();
  calibrate->add_option("--costs", costs, "stream_costs.csv (methods none and fn-lambda)");
  calibrate->add_option("--method", method, "none, fn-lambda, ols or elastic-net")->required();
  calibrate->add_option("--train-profiles", train, "Profiles used for training (elastic-net)");
  calibrate->add_option("--config", config, "JSON configuration with a calibration section");
  calibrate->add_option("--out", model_out, "Model JSON")->required();

  auto* predict = app.add_subcommand("predict", "Apply a fitted calibrator");
  predict->add_option("--model", model, "Model JSON")->required();
  predict->add_option("--features", features, "features.csv")->required();
  predict->add_option("--costs", costs, "stream_costs.csv (methods none and fn-lambda)");
  predict->add_option("--targets", targets, "Optional targets to include in the output");
  predict->add_option("--out", out, "Predictions CSV")->required();

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic consumption dataset");
  gen->add_option("--nodes", nodes, "Node count")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", data_seed, "Seed")->required();
  gen->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*profile) return cmd_profile(config, out, seed, emit_pairs, per_scenario);
    if (*aggregate) return cmd_aggregate(config, data, out, seed, no_correction);
    if (*sweep) return cmd_sweep(spec, data, out, seed, parallel);
    if (*calibrate) return cmd_calibrate(features, targets, costs, method, train, config, model_out);
    if (*predict) return cmd_predict(model, features, costs, targets, out);
    if (*gen) return cmd_gen_data(nodes, data_seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
