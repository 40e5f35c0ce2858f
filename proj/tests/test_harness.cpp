#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mpp/error.hpp"
#include "mpp/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mppverify_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes `config` (raw text) and runs the CLI; returns the exit status.
int run_cli(const std::string& kind, const std::string& config, const fs::path& dir, const std::string& extra = "") {
  const auto cfg = dir / "config.json";
  std::ofstream(cfg) << config;
  const std::string cmd = std::string(MPPVERIFY_EXE) + " " + kind + " --config " + cfg.string() + " --out " +
                          (dir / "out").string() + " " + extra + " > " + (dir / "stdout").string() + " 2> " +
                          (dir / "stderr").string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

const char* kRademacher = R"("models": {"walk": {"type": "atom", "marks": [-1, 1]}},
  "integrands": {"id": {"type": "identity"}})";

std::string bernstein_config(const std::string& case_extra, const std::string& x = "[2, 4]") {
  return std::string(R"({"kind": "bernstein", "master_seed": 7, "replicates": 2000, )") + kRademacher +
         R"(, "cases": [{"model": "walk", "integrand": "id", "horizon": 10, "x": )" + x +
         R"(, "y2": [4, 9])" + case_extra + "}]}";
}

}  // namespace

TEST_CASE("simulate writes a stream and exits 0") {
  const auto dir = scratch("simulate");
  const int rc = run_cli("simulate", R"({"models": {"p": {"type": "poisson", "marks": [1, 2], "rate": 2}},
    "cases": [{"model": "p", "horizon": 5}]})", dir);
  CHECK(rc == 0);
  const auto csv = slurp(dir / "out" / "stream.csv");
  CHECK(csv.rfind("time,mark\n", 0) == 0);
  CHECK(fs::exists(dir / "out" / "report.jsonl"));
  CHECK(fs::exists(dir / "out" / "summary.csv"));
  CHECK(fs::exists(dir / "out" / "run_info.json"));
}

TEST_CASE("unreachable thresholds pass with exit 0") {
  const auto dir = scratch("unreachable");
  CHECK(run_cli("bernstein", bernstein_config("", "[11, 20]"), dir) == 0);
  std::istringstream report(slurp(dir / "out" / "report.jsonl"));
  std::string line;
  int rows = 0;
  while (std::getline(report, line)) {
    const auto j = json::parse(line);
    if (j["type"] == "row") {
      ++rows;
      CHECK(j["exact_zero"] == true);
      CHECK(j["hits"] == 0);
      CHECK(j["pass"] == true);
    }
  }
  CHECK(rows == 4);
}

TEST_CASE("a K below minimal_k is unconditioned and exits 1") {
  const auto dir = scratch("bad_k");
  CHECK(run_cli("bernstein", bernstein_config(R"(, "k": 0.25)"), dir) == 1);
  const auto summary = json::parse(slurp(dir / "out" / "report.jsonl").substr(slurp(dir / "out" / "report.jsonl").rfind("{\"type\":\"summary\"")));
  CHECK(summary["pass"] == false);
  CHECK(summary["failed"] == 4);
}

TEST_CASE("the minimal K passes") {
  const auto dir = scratch("good_k");
  CHECK(run_cli("bernstein", bernstein_config(R"(, "k": 0.5)"), dir) == 0);
  CHECK(run_cli("bernstein", bernstein_config(""), dir, "--format csv") == 0);
  const auto out = slurp(dir / "stdout");
  CHECK(out.rfind("case,", 0) == 0);
}

TEST_CASE("configuration errors exit 2") {
  const auto dir = scratch("errors");
  CHECK(run_cli("bernstein", bernstein_config(R"(, "typo": 1)"), dir) == 2);
  CHECK(run_cli("bernstein", R"({"kind": "bernstein")", dir) == 2);
  CHECK(run_cli("bernstein", R"({"kind": "mle"})", dir) == 2);
  CHECK(run_cli("bernstein", bernstein_config("", "[]"), dir) == 2);
  CHECK(run_cli("bernstein", bernstein_config("", R"({"start": 1, "stop": 0, "step": 1})"), dir) == 2);
  std::string missing = bernstein_config("");
  missing.replace(missing.find(R"("model": "walk")"), 15, R"("model": "nope")");
  CHECK(run_cli("bernstein", missing, dir) == 2);
  CHECK(slurp(dir / "stderr").find("unknown model 'nope'") != std::string::npos);
  CHECK(run_cli("chaining", "{}", dir) == 2);
  CHECK(run_cli("nonsense", "{}", dir) == 2);
  CHECK(run_cli("bernstein", bernstein_config(""), dir, "--replicates 500") == 2);
}

TEST_CASE("reports do not depend on the worker count") {
  const auto cfg = json::parse(bernstein_config(""));
  mpp::RunOptions one, four;
  one.workers = 1;
  four.workers = 4;
  const auto a = mpp::run_experiment("bernstein", cfg, one);
  const auto b = mpp::run_experiment("bernstein", cfg, four);
  CHECK(a.report == b.report);
  CHECK(a.summary_csv == b.summary_csv);
  mpp::RunOptions reseeded;
  reseeded.seed = 8;
  CHECK(mpp::run_experiment("bernstein", cfg, reseeded).report != a.report);
}

TEST_CASE("report layout") {
  const auto r = mpp::run_experiment("gamma", json::parse(R"({"spaces": [{"matrix": [[0, 1], [1, 0]]}],
    "chain_tail": {"start": 2, "stop": 10, "step": 4}})"), {});
  std::istringstream in(r.report);
  std::string first, line, last;
  std::getline(in, first);
  int n = 0;
  while (std::getline(in, line)) {
    last = line;
    ++n;
  }
  const auto header = json::parse(first);
  CHECK(header["type"] == "header");
  CHECK(header["version"] == mpp::kVersion);
  CHECK(header["kind"] == "gamma");
  CHECK_FALSE(header["config"].contains("workers"));
  CHECK(json::parse(last)["type"] == "summary");
  CHECK(n == 2 + 3 + 1);  // two alphas, three u values, summary
  CHECK(r.pass);
  CHECK(mpp::case_seed(1, 0) != mpp::case_seed(1, 1));
}

TEST_CASE("shipped configs parse") {
  for (const auto& kind : mpp::experiment_kinds()) {
    const auto cfg = mpp::load_config(fs::path(CONFIG_DIR) / (kind + ".json"));
    CHECK(cfg.at("kind") == kind);
  }
  CHECK_THROWS_AS(mpp::load_config(fs::path(CONFIG_DIR) / "missing.json"), mpp::ConfigError);
}
