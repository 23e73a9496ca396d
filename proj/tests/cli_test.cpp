#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "fsbench_cli.hpp"
#include "test_support.hpp"

namespace fsbench {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fsbench-cli-" + std::to_string(::getpid()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return cli::run_cli(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  static std::string synthetic_config(const std::string& regressors) {
    std::ifstream in(std::string(FSBENCH_SOURCE_DIR) + "/configs/sleep_study_synthetic.json");
    std::ostringstream s;
    s << in.rdbuf();
    auto doc = nlohmann::json::parse(s.str());
    if (!regressors.empty()) doc["regressors"] = nlohmann::json::parse(regressors);
    return doc.dump(2);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

int system_exit(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(CliTest, SleepStudyConfigYieldsTwelveCells) {
  const int code = run({"run", "--config",
                        std::string(FSBENCH_SOURCE_DIR) + "/configs/sleep_study_synthetic.json",
                        "--out", path("out")});
  ASSERT_EQ(code, 0) << err_.str();
  const auto [results, meta] = read_results_json(path("out/results.json"));
  EXPECT_EQ(results.size(), 12u);
  EXPECT_EQ(meta.seed, 42);
  EXPECT_EQ(results[0].selector_label, "kbest+rfe+pca");
  EXPECT_EQ(results[3].regressor_label, "RandomForestRegressor");
  EXPECT_TRUE(results[3].importances.has_value());
  EXPECT_FALSE(results[0].importances.has_value());
  EXPECT_TRUE(fs::exists(path("out/table.md")));
  EXPECT_TRUE(fs::exists(path("out/importances-randomforestregressor-kbest-rfe-pca.svg")));
  EXPECT_FALSE(fs::exists(path("out/.fsbench-staging")));
  const std::string table = slurp(path("out/table.md"));
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 14);
}

TEST_F(CliTest, RepeatedRunsAreByteIdenticalApartFromTimestamp) {
  const std::string config = write("c.json", synthetic_config(""));
  ASSERT_EQ(run({"run", "--config", config, "--out", path("a")}), 0) << err_.str();
  ASSERT_EQ(run({"run", "--config", config, "--out", path("b")}), 0) << err_.str();
  const std::regex stamp(R"re("timestamp": "[^"]*")re");
  EXPECT_EQ(std::regex_replace(slurp(path("a/results.json")), stamp, ""),
            std::regex_replace(slurp(path("b/results.json")), stamp, ""));
  EXPECT_EQ(slurp(path("a/table.md")), slurp(path("b/table.md")));
}

TEST_F(CliTest, SeedOverrideChangesResults) {
  const std::string config = write("c.json", synthetic_config(R"([{"kind": "forest", "n_trees": 10}])"));
  ASSERT_EQ(run({"run", "--config", config, "--out", path("a")}), 0) << err_.str();
  ASSERT_EQ(run({"run", "--config", config, "--out", path("b"), "--seed", "7"}), 0) << err_.str();
  EXPECT_EQ(read_results_json(path("b/results.json")).second.seed, 7);
  EXPECT_NE(slurp(path("a/table.md")), slurp(path("b/table.md")));
}

TEST_F(CliTest, MissingRegressorsIsAConfigError) {
  auto doc = nlohmann::json::parse(synthetic_config(""));
  doc.erase("regressors");
  const std::string config = write("bad.json", doc.dump(2));
  EXPECT_EQ(run({"run", "--config", config, "--out", path("out")}), 2);
  EXPECT_NE(err_.str().find(config + ":1: error: at least one regressor is required"),
            std::string::npos)
      << err_.str();
  EXPECT_FALSE(fs::exists(path("out/results.json")));
}

TEST_F(CliTest, ConfigErrorsPointAtTheOffendingLine) {
  const std::string config = write("bad.json",
                                   "{\n"
                                   "  \"dataset\": {\"synthetic\": {\"n\": 50, \"d\": 2,\n"
                                   "    \"coefficients\": [1, 0], \"noise_sd\": 0.1}},\n"
                                   "  \"selector_ensembles\": [{\"label\": \"a\"}],\n"
                                   "  \"regressors\": [\n"
                                   "    {\"kind\": \"linear\"},\n"
                                   "    {\"kind\": \"boosting\"}\n"
                                   "  ]\n"
                                   "}\n");
  EXPECT_EQ(run({"run", "--config", config, "--out", path("out")}), 2);
  EXPECT_NE(err_.str().find(":7: error: unknown regressor kind 'boosting'"), std::string::npos)
      << err_.str();

  const std::string typo = write("typo.json",
                                 "{\n"
                                 "  \"dataset\": {\"synthetic\": {\"n\": 50, \"d\": 2,\n"
                                 "    \"coefficients\": [1, 0]}},\n"
                                 "  \"cv_fold\": 3,\n"
                                 "  \"selector_ensembles\": [{\"label\": \"a\"}],\n"
                                 "  \"regressors\": [{\"kind\": \"linear\"}]\n"
                                 "}\n");
  EXPECT_EQ(run({"run", "--config", typo, "--out", path("out")}), 2);
  EXPECT_NE(err_.str().find(":4: error: unknown key 'cv_fold'"), std::string::npos) << err_.str();

  EXPECT_EQ(run({"run", "--config", write("syntax.json", "{\n  \"dataset\": ,\n}"), "--out",
                 path("out")}),
            2);
  EXPECT_NE(err_.str().find(":2: error: invalid JSON"), std::string::npos) << err_.str();
}

TEST_F(CliTest, OversizedTechniqueIsAUsageError) {
  auto doc = nlohmann::json::parse(synthetic_config(R"([{"kind": "linear"}])"));
  doc["selector_ensembles"][0]["techniques"][0]["k"] = 9;
  EXPECT_EQ(run({"run", "--config", write("c.json", doc.dump()), "--out", path("out")}), 2);
}

TEST_F(CliTest, MissingCsvIsARuntimeFailure) {
  const std::string config = write("c.json",
                                   R"({"dataset": {"csv": "absent.csv", "target": "sl"},
                                       "selector_ensembles": [{"label": "all"}],
                                       "regressors": [{"kind": "linear"}]})");
  EXPECT_EQ(run({"run", "--config", config, "--out", path("out")}), 1);
  EXPECT_NE(err_.str().find("absent.csv"), std::string::npos);
}

TEST_F(CliTest, GenerateWritesShapeAndSupport) {
  ASSERT_EQ(run({"generate", "--n", "100", "--d", "8", "--coef", "0,2,0,0,-1.5,0,1,0", "--noise",
                 "0.5", "--seed", "3", "--out", path("g.csv")}),
            0)
      << err_.str();
  const Dataset ds = load_csv(path("g.csv"), "y");
  EXPECT_EQ(ds.n(), 100u);
  EXPECT_EQ(ds.d() + 1, 9u);
  const auto sidecar = nlohmann::json::parse(slurp(path("g.csv.support.json")));
  EXPECT_EQ(sidecar.at("support"), nlohmann::json::parse("[1, 4, 6]"));
  EXPECT_EQ(sidecar.at("features"), nlohmann::json::parse(R"(["x2", "x5", "x7"])"));

  ASSERT_EQ(run({"generate", "--n", "100", "--d", "8", "--coef", "0,2,0,0,-1.5,0,1,0", "--noise",
                 "0.5", "--seed", "3", "--out", path("h.csv")}),
            0);
  EXPECT_EQ(slurp(path("g.csv")), slurp(path("h.csv")));
}

TEST_F(CliTest, GenerateValidation) {
  EXPECT_EQ(run({"generate", "--n", "10", "--d", "2", "--coef", "1,0", "--noise", "-0.1", "--seed",
                 "1", "--out", path("x.csv")}),
            2);
  EXPECT_EQ(run({"generate", "--n", "10", "--d", "3", "--coef", "1,0", "--noise", "0.1", "--seed",
                 "1", "--out", path("x.csv")}),
            2);
  EXPECT_EQ(run({"generate", "--n", "10", "--d", "2", "--coef", "1,0", "--noise", "0.1", "--seed",
                 "1", "--out", path("missing/dir/x.csv")}),
            1);
  EXPECT_FALSE(fs::exists(path("x.csv")));
}

TEST_F(CliTest, ScoreRanksRelevantFeatureFirst) {
  ASSERT_EQ(run({"generate", "--n", "200", "--d", "3", "--coef", "0,0,2", "--noise", "0.5",
                 "--seed", "5", "--out", path("s.csv")}),
            0);
  ASSERT_EQ(run({"score", "--data", path("s.csv"), "--target", "y", "--method", "f-regression"}), 0)
      << err_.str();
  std::istringstream lines(out_.str());
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(header.substr(0, 7), "feature");
  EXPECT_EQ(first.substr(0, 3), "x3 ");

  for (const std::string method : {"mutual-info", "chi2", "rfe"}) {
    ASSERT_EQ(run({"score", "--data", path("s.csv"), "--target", "y", "--method", method}), 0)
        << method << ": " << err_.str();
    EXPECT_NE(out_.str().find("\nx3 "), std::string::npos) << method;
    EXPECT_EQ(out_.str().find("\nx3 "), out_.str().find('\n')) << method;
  }
}

TEST_F(CliTest, ScorePcaPercentagesSumToHundred) {
  ASSERT_EQ(run({"generate", "--n", "80", "--d", "5", "--coef", "1,1,0,0,1", "--noise", "0.2",
                 "--seed", "8", "--out", path("p.csv")}),
            0);
  ASSERT_EQ(run({"score", "--data", path("p.csv"), "--target", "y", "--method", "pca"}), 0);
  std::istringstream lines(out_.str());
  std::string line, name;
  std::getline(lines, line);
  double total = 0.0, value = 0.0;
  int rows = 0;
  while (lines >> name >> value) {
    total += value;
    ++rows;
  }
  EXPECT_EQ(rows, 5);
  EXPECT_NEAR(total, 100.0, 0.01);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({"score", "--data", "x.csv", "--target", "y", "--method", "lasso"}), 2);
  EXPECT_NE(err_.str().find("--method"), std::string::npos);
  EXPECT_NE(err_.str().find("Usage"), std::string::npos);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"run", "--config", "c.json"}), 2);
  EXPECT_EQ(run({"score", "--data", path("nope.csv"), "--target", "y", "--method", "chi2"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string exe = FSBENCH_EXE;
  const std::string quiet = " >/dev/null 2>&1";
  EXPECT_EQ(system_exit(exe + " run --config " + FSBENCH_SOURCE_DIR +
                        "/configs/sleep_study_synthetic.json --out " + path("bin") + quiet),
            0);
  EXPECT_TRUE(fs::exists(path("bin/results.json")));
  EXPECT_EQ(system_exit(exe + " run --config " + write("bad.json", "{}") + " --out " + path("x") + quiet), 2);
  EXPECT_EQ(system_exit(exe + " generate --n 10 --d 2 --coef 1,0 --noise 0 --seed 1 --out " +
                        path("missing/x.csv") + quiet),
            1);
  EXPECT_EQ(system_exit(exe + " bogus" + quiet), 2);
}

}  // namespace
}  // namespace fsbench
