#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "stpca/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

std::string cli() {
  const char* p = std::getenv("STPCA_CLI");
  return p ? p : "stpca";
}

std::string config(const std::string& name) {
  const char* p = std::getenv("STPCA_CONFIGS");
  return std::string(p ? p : "configs") + "/" + name + ".ini";
}

Result run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<double>> data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(row);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("stpca_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(Cli, MissingConfigExitsTwoAndWritesNothing) {
  const Result r = run("simulate --config " + (dir_ / "absent.ini").string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "o"));
}

TEST_F(Cli, BadOverrideExitsTwo) {
  EXPECT_EQ(run("simulate --config " + config("gf-p3-r2") + " --out " + dir_.string() +
                " --override model.p=one")
                .code,
            2);
  EXPECT_EQ(run("simulate --config " + config("gf-p3-r2") + " --out " + dir_.string() + " --override nodot")
                .code,
            2);
}

TEST_F(Cli, GradientFlowSimulateRecovers) {
  const Result r = run("simulate --config " + config("gf-p3-r2") + " --out " + dir_.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("exact recovery: true"), std::string::npos);
  ASSERT_TRUE(fs::exists(dir_ / "summary.csv"));
  ASSERT_TRUE(fs::exists(dir_ / "trial.json"));
  const std::string summary = slurp(dir_ / "summary.csv");
  EXPECT_NE(summary.find("config_hash"), std::string::npos);
  EXPECT_NE(summary.find(stpca::version()), std::string::npos);
  EXPECT_NE(slurp(dir_ / "trial.json").find("config_hash"), std::string::npos);
}

TEST_F(Cli, ZeroHorizonWritesSummaryOnly) {
  const Result r = run("simulate --config " + config("gf-p3-r2") + " --out " + dir_.string() +
                       " --override dynamics.horizon=0");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "summary.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "trial.json"));
}

TEST_F(Cli, ZeroSgdStepsWritesSummaryOnly) {
  const Result r = run("simulate --config " + config("sgd-p2-r1") + " --out " + dir_.string() +
                       " --override dynamics.steps=0");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "summary.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "trial.json"));
}

TEST_F(Cli, DeterministicSimulateIsByteStable) {
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("simulate --deterministic --quiet --config " + config("gf-p3-r2") + " --out " + a.string()).code, 0);
  ASSERT_EQ(run("simulate --deterministic --quiet --config " + config("gf-p3-r2") + " --out " + b.string()).code, 0);
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  EXPECT_EQ(slurp(a / "trial.json"), slurp(b / "trial.json"));
}

TEST_F(Cli, QuietSuppressesStdout) {
  const Result r = run("simulate --quiet --config " + config("gf-p3-r2") + " --out " + dir_.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, PopulationSeparatedReachesDiagonal) {
  const Result r = run("population --config " + config("fig-p3-r2") + " --out " + dir_.string());
  ASSERT_EQ(r.code, 0);
  const std::string text = slurp(dir_ / "population.csv");
  EXPECT_EQ(text.rfind("# stpca ", 0), 0u);
  const auto rows = data_rows(dir_ / "population.csv");
  ASSERT_FALSE(rows.empty());
  const auto& last = rows.back();
  ASSERT_GE(last.size(), 5u);
  EXPECT_GE(last[1], 0.99);  // m_1_1
  EXPECT_GE(last[4], 0.99);  // m_2_2
  EXPECT_TRUE(fs::exists(dir_ / "population.meta.json"));
}

TEST_F(Cli, PopulationZeroHorizonSingleRow) {
  ASSERT_EQ(run("population --quiet --config " + config("fig-p3-r2") + " --out " + dir_.string() +
                " --override population.horizon=0")
                .code,
            0);
  EXPECT_EQ(data_rows(dir_ / "population.csv").size(), 1u);
}

TEST_F(Cli, IsotropicThetaMonotone) {
  ASSERT_EQ(run("population --quiet --config " + config("fig-p2-isotropic") + " --out " + dir_.string()).code, 0);
  const auto rows = data_rows(dir_ / "population.csv");
  ASSERT_GT(rows.size(), 2u);
  const std::size_t r = 2, first_theta = 1 + r * r;
  for (std::size_t c = first_theta; c < first_theta + r; ++c)
    for (std::size_t k = 1; k < rows.size(); ++k)
      EXPECT_GE(rows[k][c], rows[k - 1][c] - 1e-12) << "column " << c << " row " << k;
  EXPECT_GT(rows.back()[first_theta], 0.9);
}

TEST_F(Cli, CheckPrintsPassRates) {
  const Result r = run("check --config " + config("sgd-p3-r2") + " --out " + dir_.string() +
                       " --override check.samples=50");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("condition 1 (absolute)"), std::string::npos);
  EXPECT_NE(r.out.find("condition 2"), std::string::npos);
  EXPECT_NE(r.out.find("samples: 50"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "check.csv"));
}

TEST_F(Cli, CheckRejectsPopulation) {
  EXPECT_EQ(run("check --config " + config("fig-p3-r2") + " --out " + dir_.string()).code, 2);
}

TEST_F(Cli, SweepDryRunPrintsEstimate) {
  const Result r = run("sweep --dry-run --config " + config("sweep-p2-r1") + " --out " + dir_.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("estimated flops"), std::string::npos);
  EXPECT_NE(r.out.find("cells: 3"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "sweep.csv"));
}

TEST_F(Cli, SweepAboveFlopLimitNeedsForce) {
  EXPECT_EQ(run("sweep --config " + config("sweep-p2-r1") + " --out " + dir_.string() +
                " --override sweep.flop_limit=10")
                .code,
            2);
  EXPECT_FALSE(fs::exists(dir_ / "sweep.csv"));
}

TEST_F(Cli, SweepThenReportIsDeterministic) {
  const std::string small = " --override sweep.N=16 --override sweep.trials=3";
  const Result s = run("sweep --deterministic --config " + config("sweep-p2-r1") + " --out " + dir_.string() + small);
  ASSERT_EQ(s.code, 0);
  ASSERT_TRUE(fs::exists(dir_ / "sweep.csv"));
  ASSERT_TRUE(fs::exists(dir_ / "threshold.json"));
  const std::string csv = (dir_ / "sweep.csv").string();
  const Result a = run("report " + csv);
  const Result b = run("report " + csv);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find(stpca::version()), std::string::npos);
  EXPECT_NE(a.out.find("sweep.csv"), std::string::npos);
}

TEST_F(Cli, ReportWithoutInputsExitsFour) {
  EXPECT_EQ(run("report --out " + dir_.string()).code, 4);
  EXPECT_EQ(run("report " + (dir_ / "missing.csv").string()).code, 4);
}

}  // namespace
