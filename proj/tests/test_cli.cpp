#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "subspec/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kScratch = fs::path(SUBSPEC_SCRATCH_DIR) / "cli";

json line_config() {
  std::ifstream is(fs::path(SUBSPEC_CONFIG_DIR) / "line_abelian.json");
  return json::parse(is);
}

fs::path write_config(const std::string& name, const json& j) {
  fs::create_directories(kScratch);
  const fs::path p = kScratch / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

int run(std::vector<std::string> args, std::string* err_out = nullptr) {
  args.insert(args.begin(), "subspec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream err;
  const int code = subspec::run_cli(static_cast<int>(argv.size()), argv.data(), err);
  if (err_out) *err_out = err.str();
  return code;
}

int run_config(const std::string& cmd, const json& j, const std::string& name) {
  const fs::path cfg = write_config(name, j);
  return run({cmd, "--config", cfg.string(), "--out", (kScratch / name).string()});
}

}  // namespace

TEST(Cli, EigenWritesOutputs) {
  ASSERT_EQ(run_config("eigen", line_config(), "eigen_ok"), 0);
  const fs::path out = kScratch / "eigen_ok";
  for (const char* f : {"eigen_result.json", "phi1.csv", "trace.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  std::ifstream is(out / "eigen_result.json");
  const json r = json::parse(is);
  EXPECT_EQ(r["schema_version"], 1);
  EXPECT_NEAR(r["lambda1"].get<double>(), 9.67569173981, 1e-9);
  EXPECT_EQ(subspec::read_field_csv((out / "phi1.csv").string()).size(), 64u);
}

TEST(Cli, NehariWritesBothBranches) {
  ASSERT_EQ(run_config("nehari", line_config(), "nehari_ok"), 0);
  const fs::path out = kScratch / "nehari_ok";
  for (const char* f : {"nehari_result.json", "fiber_report.json", "u_plus.csv", "u_minus.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
}

TEST(Cli, SweepWritesTable) {
  json j = line_config();
  j["sweep"] = {{"lambda_fractions", {0.5, 2.0}}};
  ASSERT_EQ(run_config("sweep", j, "sweep_ok"), 0);
  std::ifstream is(kScratch / "sweep_ok" / "sweep.csv");
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Cli, VerifySubsetPasses) {
  json j = line_config();
  j["verify"]["checks"] = {"oracle_equivalence", "sign_change"};
  ASSERT_EQ(run_config("verify", j, "verify_ok"), 0);
  std::ifstream is(kScratch / "verify_ok" / "verify_report.json");
  const json r = json::parse(is);
  EXPECT_EQ(r["reports"].size(), 2u);
  EXPECT_TRUE(r["all_passed"].get<bool>());
}

TEST(Cli, MalformedJsonExits2) {
  EXPECT_EQ(run({"eigen", "--config", SUBSPEC_CONFIG_DIR "/../tests/data/malformed.json"}), 2);
}

TEST(Cli, MissingFileExits2) {
  EXPECT_EQ(run({"eigen", "--config", (kScratch / "does_not_exist.json").string()}), 2);
}

TEST(Cli, MissingConfigFlagExits2) { EXPECT_EQ(run({"eigen"}), 2); }

TEST(Cli, UnknownKeyExits2) {
  json j = line_config();
  j["fractional"]["sigma"] = 1;
  EXPECT_EQ(run_config("eigen", j, "unknown_key"), 2);
}

TEST(Cli, MissingWeightExits2) {
  json j = line_config();
  j["problem"].erase("g");
  EXPECT_EQ(run_config("nehari", j, "missing_g"), 2);
}

TEST(Cli, InadmissibleExponentExits2) {
  json j = line_config();
  j["fractional"]["s"] = 0.9;
  EXPECT_EQ(run_config("nehari", j, "bad_s"), 2);
}

TEST(Cli, EmptySweepListExits2) {
  json j = line_config();
  j["sweep"] = {{"lambdas", json::array()}};
  EXPECT_EQ(run_config("sweep", j, "empty_sweep"), 2);
}

TEST(Cli, IterationCapExits3WithTrace) {
  json j = line_config();
  j["solver"]["max_iter"] = 1;
  EXPECT_EQ(run_config("eigen", j, "capped"), 3);
  EXPECT_TRUE(fs::exists(kScratch / "capped" / "trace.csv"));
}

TEST(Cli, LambdaAboveThresholdExits4) {
  json j = line_config();
  j["problem"]["lambda"] = 10.31;
  EXPECT_EQ(run_config("nehari", j, "collapse"), 4);
  EXPECT_TRUE(fs::exists(kScratch / "collapse" / "fiber_report.json"));
}

TEST(Cli, WrongSchemaVersionExits2) {
  json j = line_config();
  j["schema_version"] = 99;
  EXPECT_EQ(run_config("eigen", j, "schema"), 2);
}
