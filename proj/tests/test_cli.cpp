#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "m2m/m2m.h"
#include "schema_check.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("m2m_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(path(name));
    out << text;
  }

  Outcome invoke(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "env -u M2M_SEED -u SOURCE_DATE_EPOCH " + env + " \"" + M2M_CLI_PATH + "\" " + args +
                            " >\"" + path("stdout") + "\" 2>\"" + path("stderr") + "\"";
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(path("stdout"));
    r.err = slurp(path("stderr"));
    return r;
  }

  fs::path dir_;
};

std::string last_field(const std::string& csv_line) { return csv_line.substr(csv_line.rfind(',') + 1); }

std::string line(const std::string& text, std::size_t n) {
  std::istringstream in(text);
  std::string l;
  for (std::size_t i = 0; i <= n; ++i) std::getline(in, l);
  return l;
}

}  // namespace

TEST_F(Cli, ThreeRowSketchHasExactCount) {
  write("three.csv", "a,b\n0.1,0.2\n0.5,0.5\n0.9,0.7\n");
  const Outcome r = invoke("sketch " + path("three.csv") + " -o " + path("s.json") + " --epsilon inf");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line(r.out, 0), "spec_id,variant,m,sensitivity_l1,sum_noise_scale,count_noise_scale,noisy_count");
  EXPECT_EQ(last_field(line(r.out, 1)), "3");
  const auto doc = nlohmann::json::parse(slurp(path("s.json")));
  EXPECT_EQ(doc.at("noisy_count"), 3.0);
  EXPECT_TRUE(doc.at("created_at").is_null());
}

TEST_F(Cli, OutOfBoundsHistExitsTwoWithoutOutput) {
  write("bad.csv", "a,b\n0.1,0.2\n1.5,0.5\n");
  const Outcome r = invoke("sketch " + path("bad.csv") + " -o " + path("s.json") + " --map hist");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("attribute 1"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("s.json")));
  EXPECT_FALSE(fs::exists(path("s.json.tmp")));
}

TEST_F(Cli, SketchesAreByteIdenticalAndValid) {
  ASSERT_EQ(invoke("generate random10 -o " + path("d.csv") + " --n 2000 --d 4 --seed 3").code, 0);
  const std::string base = "sketch " + path("d.csv") + " --seed 7 --m 40 --epsilon 2 -o ";
  ASSERT_EQ(invoke(base + path("a.json")).code, 0);
  ASSERT_EQ(invoke("--threads 3 " + base + path("b.json")).code, 0);
  ASSERT_EQ(invoke(base + path("c.json"), "M2M_SEED=7").code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("c.json")));

  // The environment seed is only a default: a flag overrides it.
  ASSERT_EQ(invoke("sketch " + path("d.csv") + " --m 40 --epsilon 2 -o " + path("e.json"), "M2M_SEED=7").code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("e.json")));

  const Outcome schema = invoke("schema");
  ASSERT_EQ(schema.code, 0);
  const auto errs = schema_check::errors(nlohmann::json::parse(slurp(path("a.json"))), nlohmann::json::parse(schema.out));
  EXPECT_TRUE(errs.empty()) << errs.front();
}

TEST_F(Cli, SourceDateEpochStampsTheFile) {
  write("three.csv", "a\n0.1\n0.5\n0.9\n");
  ASSERT_EQ(invoke("sketch " + path("three.csv") + " -o " + path("s.json"), "SOURCE_DATE_EPOCH=0").code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(path("s.json"))).at("created_at"), "1970-01-01T00:00:00Z");
}

TEST_F(Cli, NewerFormatIsRejected) {
  write("three.csv", "a\n0.1\n0.5\n0.9\n");
  ASSERT_EQ(invoke("sketch " + path("three.csv") + " -o " + path("s.json")).code, 0);
  auto doc = nlohmann::json::parse(slurp(path("s.json")));
  doc["version"] = 99;
  write("s.json", doc.dump());
  const Outcome r = invoke("inspect " + path("s.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("version"), std::string::npos) << r.err;
}

TEST_F(Cli, MomentOfUniformDataIsHalf) {
  ASSERT_EQ(invoke("generate random10 -o " + path("d.csv") + " --n 5000 --d 3 --seed 1").code, 0);
  ASSERT_EQ(invoke("sketch " + path("d.csv") + " -o " + path("s.json") + " --epsilon inf").code, 0);
  const Outcome r = invoke("estimate " + path("s.json") + " \"moment 1 1\" --n-synth 20000 --truth " + path("d.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line(r.out, 0), "target,estimate,truth,mre,mae");
  std::istringstream fields(line(r.out, 1));
  std::string target, est, truth;
  std::getline(fields, target, ',');
  std::getline(fields, est, ',');
  std::getline(fields, truth, ',');
  EXPECT_EQ(target, "moment 1 1");
  EXPECT_NEAR(std::stod(est), 0.5, 0.02);
  EXPECT_NEAR(std::stod(est), std::stod(truth), 0.01);
}

TEST_F(Cli, MalformedTargetExitsTwo) {
  write("three.csv", "a\n0.1\n0.5\n0.9\n");
  ASSERT_EQ(invoke("sketch " + path("three.csv") + " -o " + path("s.json")).code, 0);
  const Outcome r = invoke("estimate " + path("s.json") + " 'count \"x1<>0.3\"'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("parse error at column"), std::string::npos) << r.err;
}

TEST_F(Cli, CovarianceIsSymmetricCsv) {
  ASSERT_EQ(invoke("generate random10 -o " + path("d.csv") + " --n 500 --d 3 --seed 1").code, 0);
  ASSERT_EQ(invoke("sketch " + path("d.csv") + " -o " + path("s.json") + " --m 40").code, 0);
  const Outcome r = invoke("cov " + path("s.json") + " --n-synth 2000");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line(r.out, 0), "attribute,x1,x2,x3");
  std::vector<std::vector<std::string>> m;
  for (std::size_t i = 1; i <= 3; ++i) {
    std::istringstream fields(line(r.out, i));
    std::vector<std::string> row;
    std::string f;
    while (std::getline(fields, f, ',')) row.push_back(f);
    ASSERT_EQ(row.size(), 4u);
    m.push_back(row);
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m[i][j + 1], m[j][i + 1]);
}

TEST_F(Cli, QueryBatchAndRawCounts) {
  ASSERT_EQ(invoke("generate random10 -o " + path("d.csv") + " --n 3000 --d 3 --seed 2").code, 0);
  ASSERT_EQ(invoke("sketch " + path("d.csv") + " -o " + path("s.json") + " --epsilon inf").code, 0);
  write("q.txt", "# queries\ncount \"x1<=0.5 and x2>=0.2 and x3<=0.9\"\nmoment 2 2\n");
  const Outcome frac = invoke("query-batch " + path("s.json") + " " + path("q.txt") + " --n-synth 5000 --truth " + path("d.csv"));
  ASSERT_EQ(frac.code, 0) << frac.err;
  const Outcome raw = invoke("query-batch " + path("s.json") + " " + path("q.txt") +
                      " --n-synth 5000 --raw-count --truth " + path("d.csv"));
  ASSERT_EQ(raw.code, 0) << raw.err;
  auto field = [](const std::string& l, int k) {
    std::istringstream in(l);
    std::string f;
    for (int i = 0; i <= k; ++i) std::getline(in, f, ',');
    return std::stod(f);
  };
  // The target text contains a quoted comma-free string, so fields 1 and 2 are estimate and truth.
  EXPECT_NEAR(field(line(raw.out, 1), 1), 3000.0 * field(line(frac.out, 1), 1), 1e-6);
  EXPECT_NEAR(field(line(raw.out, 1), 2), 3000.0 * field(line(frac.out, 1), 2), 1e-6);
  EXPECT_EQ(field(line(raw.out, 2), 1), field(line(frac.out, 2), 1));
  EXPECT_EQ(invoke("estimate " + path("s.json") + " \"moment 1 1\" --raw-count").code, 2);
}

TEST_F(Cli, FitLogregErrorsAndHistWarning) {
  ASSERT_EQ(invoke("generate separable -o " + path("d.csv") + " --n 2000 --d 3 --seed 2").code, 0);
  ASSERT_EQ(invoke("sketch " + path("d.csv") + " -o " + path("h.json") + " --map hist --n-bins 5 --binary-last").code, 0);
  EXPECT_EQ(invoke("fit-logreg " + path("h.json") + " " + path("missing.csv")).code, 1);
  const Outcome r = invoke("fit-logreg " + path("h.json") + " " + path("d.csv") + " --n-synth 2000 --iterations 100 -o " +
                    path("model.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("HIST"), std::string::npos) << r.err;
  EXPECT_EQ(line(r.out, 0), "auc");
  const double auc = std::stod(line(r.out, 1));
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);
  const auto model = nlohmann::json::parse(slurp(path("model.json")));
  EXPECT_TRUE(model.contains("theta"));
  EXPECT_TRUE(model.contains("intercept"));
  EXPECT_TRUE(model.contains("config"));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(invoke("").code, 2);
  EXPECT_EQ(invoke("estimate").code, 2);
  EXPECT_EQ(invoke("sketch nonexistent.csv -o " + path("x.json")).code, 1);
  write("cfg.txt", "colour = red\n");
  write("three.csv", "a\n0.1\n");
  EXPECT_EQ(invoke("sketch " + path("three.csv") + " -o " + path("x.json") + " --config " + path("cfg.txt")).code, 2);
}

TEST_F(Cli, InspectAndMerge) {
  write("a.csv", "a,b\n0.1,0.2\n0.5,0.5\n");
  write("b.csv", "a,b\n0.3,0.3\n");
  ASSERT_EQ(invoke("sketch " + path("a.csv") + " -o " + path("a.json") + " --epsilon inf --seed 4").code, 0);
  ASSERT_EQ(invoke("sketch " + path("b.csv") + " -o " + path("b.json") + " --epsilon inf --seed 4").code, 0);
  ASSERT_EQ(invoke("merge " + path("a.json") + " " + path("b.json") + " -o " + path("m.json")).code, 0);
  const Outcome r = invoke("inspect " + path("m.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("noisy_count,3\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("parents,2\n"), std::string::npos) << r.out;
}

TEST_F(Cli, EvalWritesResults) {
  write("plan.txt", "n = 300\nd = 3\nsketches = hist\nhist.n_bins = 4\nepsilons = 1\nrepetitions = 2\n"
                    "tasks = mean\nn_synth = 500\n");
  const Outcome r = invoke("eval --plan " + path("plan.txt") + " --out " + path("out"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("out/results.csv")));
  EXPECT_TRUE(fs::exists(path("out/aggregate.csv")));
}
