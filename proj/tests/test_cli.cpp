#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "p2pgne/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("p2pgne_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result cli(const std::string& args) const {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(P2PGNE_CLI) + " " + args + " >" + (dir_ / "stdout.txt").string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  static std::string reference() { return p2pgne::fixture::source_path("scenarios/reference.json"); }

  fs::path dir_;
};

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_F(Cli, RunWritesCsvs) {
  const auto r = cli("run --scenario " + reference() + " --seed 7 --horizon 30 --out " + (dir_ / "a").string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"trajectory.csv", "summary.csv", "metrics.csv"}) EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  EXPECT_EQ(count(slurp(dir_ / "a" / "trajectory.csv"), "\n"), 1u + 31u * 6u);
  EXPECT_NE(slurp(dir_ / "a" / "summary.csv").find("schema_version,1"), std::string::npos);

  ASSERT_EQ(cli("run --scenario " + reference() + " --seed 7 --horizon 30 --threads 3 --out " + (dir_ / "b").string()).code, 0);
  for (const char* f : {"trajectory.csv", "summary.csv", "metrics.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, ValidateDetectsCorruptedLambda) {
  const fs::path run = dir_ / "run";
  ASSERT_EQ(cli("run -s " + reference() + " --horizon 20 -o " + run.string()).code, 0);
  const std::string base = "validate -s " + reference() + " --horizon 20 -t ";
  EXPECT_EQ(cli(base + (run / "trajectory.csv").string()).code, 0);

  // blow up the lambda column (index 14) of one row
  std::istringstream in(slurp(run / "trajectory.csv"));
  std::ofstream out(dir_ / "bad.csv", std::ios::binary);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (row++ == 40) {
      auto cells = p2pgne::split_csv(line);
      cells[14] = "-1e6 " + cells[14];
      cells[14] = cells[14].substr(0, cells[14].rfind(' '));
      line.clear();
      for (std::size_t k = 0; k < cells.size(); ++k) line += (k ? "," : "") + cells[k];
    }
    out << line << '\n';
  }
  out.close();
  const auto r = cli(base + (dir_ / "bad.csv").string());
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j.at("error"), "BoundViolation");
  EXPECT_FALSE(j.at("details").empty());
}

TEST_F(Cli, OracleWritesSequence) {
  const fs::path out = dir_ / "vgne.csv";
  ASSERT_EQ(cli("oracle -s " + reference() + " --horizon 5 -o " + out.string()).code, 0);
  const std::string text = slurp(out);
  EXPECT_EQ(text.rfind("interval,prosumer,pg,pc,pd,pmg,ptr,lambda,mu,kkt\n", 0), 0u);
  EXPECT_EQ(count(text, "\n"), 1u + 5u * 6u);
}

TEST_F(Cli, PlotHasOnePolylinePerProsumerPerPanel) {
  const fs::path run = dir_ / "run";
  ASSERT_EQ(cli("run -s " + reference() + " --horizon 20 -o " + run.string()).code, 0);
  const fs::path svg = dir_ / "r.svg";
  ASSERT_EQ(cli("plot -i " + run.string() + " -o " + svg.string()).code, 0);
  const std::string text = slurp(svg);
  EXPECT_EQ(text.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(text, "<polyline"), 12u);
  for (int i = 1; i <= 6; ++i) EXPECT_EQ(count(text, "prosumer-" + std::to_string(i) + "\""), 2u) << i;
}

TEST_F(Cli, BadInputIsMachineReadable) {
  {
    std::ofstream f(dir_ / "empty.json");
  }
  auto r = cli("run -s " + (dir_ / "empty.json").string() + " -o " + (dir_ / "x").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err).at("error"), "ParseError");

  auto doc = nlohmann::json::parse(slurp(reference()));
  doc["prosumers"][3]["a_c"] = 0.0;
  {
    std::ofstream f(dir_ / "bad.json");
    f << doc.dump();
  }
  r = cli("run -s " + (dir_ / "bad.json").string() + " -o " + (dir_ / "x").string());
  EXPECT_EQ(r.code, 2);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j.at("error"), "ValidationError");
  EXPECT_FALSE(fs::exists(dir_ / "x" / "trajectory.csv"));

  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("run").code, 2);
}
