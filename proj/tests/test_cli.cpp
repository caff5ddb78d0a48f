#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "selfheal/csv.hpp"
#include "selfheal/dataset.hpp"
#include "selfheal/experiments.hpp"

namespace fs = std::filesystem;
using namespace selfheal;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("shd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int shd(const std::string& args) const {
    const std::string cmd = "env -u SHD_OUT_DIR " + std::string(SHD_BINARY) + " " + args + " >" + path("stdout.txt") +
                            " 2>" + path("stderr.txt");
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string err() const { return read_file(path("stderr.txt")); }

  void write(const std::string& name, const std::string& text) const { write_file(path(name), text); }

  fs::path dir_;
};

constexpr const char* kSmallConfig = R"({"nodes": 40, "epochs": 120, "thresholds": [100, 400],
  "fault": {"profile": "P1", "scale": 0.5}})";

}  // namespace

TEST_F(Cli, GenDataIsByteIdentical) {
  ASSERT_EQ(shd("gen-data --nodes 30 --seed 4 --out " + path("a.csv")), 0) << err();
  ASSERT_EQ(shd("gen-data --nodes 30 --seed 4 --out " + path("b.csv")), 0) << err();
  EXPECT_EQ(read_file(path("a.csv")), read_file(path("b.csv")));
  const auto ds = dataset_from_csv(read_file(path("a.csv")));
  EXPECT_EQ(ds.size(), 30u);
}

TEST_F(Cli, ProfileWritesExpectedFiles) {
  write("c.json", kSmallConfig);
  ASSERT_EQ(shd("profile --config " + path("c.json") + " --out " + path("out")), 0) << err();
  for (const char* f : {"frequencies.csv", "cost_summary.csv", "pair_costs.csv", "features.csv", "stream_costs.csv",
                        "metadata.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  const auto freq = read_csv(path("out/frequencies.csv"));
  EXPECT_EQ(freq.header, (std::vector<std::string>{"profile", "scale", "threshold", "scenario", "state", "count", "rel_freq"}));
  const auto hist = read_csv(path("out/pair_costs.csv"));
  EXPECT_EQ(hist.rows.size(), 2 * kHistogramBins);
  ASSERT_EQ(shd("profile --emit-pairs --config " + path("c.json") + " --out " + path("pairs")), 0) << err();
  EXPECT_EQ(read_csv(path("pairs/pair_costs.csv")).rows.size(), 2u * 40u * 39u);
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  write("c.json", kSmallConfig);
  const std::string env_dir = path("env_out");
  const std::string cmd = "SHD_OUT_DIR=" + env_dir + " " + std::string(SHD_BINARY) + " profile --config " +
                          path("c.json") + " --out " + path("ignored") + " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(fs::path(env_dir) / "frequencies.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "ignored"));
}

TEST_F(Cli, SeedOverrideChangesTrace) {
  write("c.json", kSmallConfig);
  const std::string run = "profile --emit-pairs --config " + path("c.json") + " --out ";
  ASSERT_EQ(shd(run + path("a")), 0);
  ASSERT_EQ(shd(run + path("b") + " --seed 99"), 0);
  ASSERT_EQ(shd(run + path("c")), 0);
  EXPECT_EQ(read_file(path("a/pair_costs.csv")), read_file(path("c/pair_costs.csv")));
  EXPECT_NE(read_file(path("a/pair_costs.csv")), read_file(path("b/pair_costs.csv")));
}

TEST_F(Cli, AggregateTimeseriesHeader) {
  write("c.json", kSmallConfig);
  ASSERT_EQ(shd("aggregate --config " + path("c.json") + " --data synthetic --out " + path("agg")), 0) << err();
  const auto t = read_csv(path("agg/timeseries.csv"));
  EXPECT_EQ(t.header, (std::vector<std::string>{"epoch", "actual_sum", "faulty_estimate_mean", "corrective_estimate_mean",
                                                "avg_rel_error_faulty", "avg_rel_error_corrective"}));
  EXPECT_EQ(t.rows.size(), 120u);
}

TEST_F(Cli, ExitCodes) {
  write("bad_key.json", R"({"nodes": 40, "colour": "blue"})");
  EXPECT_EQ(shd("profile --config " + path("bad_key.json") + " --out " + path("o")), 2);
  EXPECT_NE(err().find("colour"), std::string::npos);
  write("bad_json.json", "{nodes");
  EXPECT_EQ(shd("profile --config " + path("bad_json.json") + " --out " + path("o")), 2);
  EXPECT_EQ(shd("profile --config " + path("missing.json") + " --out " + path("o")), 2);
  EXPECT_EQ(shd("profile --out " + path("o")), 2);
  EXPECT_EQ(shd("frobnicate"), 2);

  write("c.json", kSmallConfig);
  std::string data = dataset_to_csv(generate_synthetic(40, 1));
  data += "40,1,2,3\n";
  write("short.csv", data);
  EXPECT_EQ(shd("aggregate --config " + path("c.json") + " --data " + path("short.csv") + " --out " + path("o")), 3);
  EXPECT_NE(err().find("42"), std::string::npos) << err();
  write("small.csv", dataset_to_csv(generate_synthetic(10, 1)));
  EXPECT_EQ(shd("aggregate --config " + path("c.json") + " --data " + path("small.csv") + " --out " + path("o")), 3);
}

TEST_F(Cli, SweepCalibratePredictRoundTrip) {
  write("spec.json", R"({"base": {"nodes": 40, "epochs": 120}, "profiles": ["P1", "P2"],
    "fault_scales": [0.2, 0.4], "thresholds": [100, 200, 400]})");
  ASSERT_EQ(shd("sweep --spec " + path("spec.json") + " --out " + path("s1") + " --parallel 1"), 0) << err();
  ASSERT_EQ(shd("sweep --spec " + path("spec.json") + " --out " + path("s2") + " --parallel 3"), 0) << err();
  for (const char* f : {"results.csv", "features.csv", "stream_costs.csv", "frequencies.csv", "metadata.json"}) {
    EXPECT_EQ(read_file(path(std::string("s1/") + f)), read_file(path(std::string("s2/") + f))) << f;
  }
  EXPECT_EQ(read_csv(path("s1/results.csv")).rows.size(), 12u);

  const std::string in = " --features " + path("s1/features.csv") + " --targets " + path("s1/results.csv");
  ASSERT_EQ(shd("calibrate" + in + " --method ols --out " + path("ols.json")), 0) << err();
  EXPECT_TRUE(fs::exists(dir_ / "ols.report.json"));
  ASSERT_EQ(shd("calibrate" + in + " --costs " + path("s1/stream_costs.csv") + " --method fn-lambda --out " +
                path("fn.json")),
            0)
      << err();
  ASSERT_EQ(shd("calibrate" + in + " --method elastic-net --train-profiles P1 --out " + path("en.json")), 0) << err();
  EXPECT_TRUE(fs::exists(dir_ / "en.generalization.csv"));
  EXPECT_EQ(shd("calibrate" + in + " --method fn-lambda --out " + path("x.json")), 3);
  EXPECT_EQ(shd("calibrate" + in + " --method magic --out " + path("x.json")), 2);

  ASSERT_EQ(shd("predict --model " + path("ols.json") + " --features " + path("s1/features.csv") + " --out " +
                path("pred.csv")),
            0)
      << err();
  const auto pred = read_csv(path("pred.csv"));
  EXPECT_EQ(pred.header, (std::vector<std::string>{"setting_key", "predicted", "target", "method"}));
  EXPECT_EQ(pred.rows.size(), 12u);
  ASSERT_EQ(shd("predict --model " + path("fn.json") + " --features " + path("s1/features.csv") + " --costs " +
                path("s1/stream_costs.csv") + " --out " + path("pred_fn.csv")),
            0)
      << err();

  write("partial.csv", "setting_key,target\nP1/0.20/100,0.1\nP9/0.20/100,0.3\n");
  EXPECT_EQ(shd("calibrate --features " + path("s1/features.csv") + " --targets " + path("partial.csv") +
                " --method ols --out " + path("y.json")),
            3);
  EXPECT_NE(err().find("P9/0.20/100"), std::string::npos);
}
