#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "micp/cli.hpp"
#include "micp/pipeline.hpp"
#include "test_util.hpp"

using namespace micp;
using micp::test::scratch_dir;
using micp::test::slurp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "micp");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// simulate + split into dir/{opt,cal,test}.jsonl
void prepare(const fs::path& dir, std::size_t n, const std::string& sizes, std::uint64_t seed = 5,
             const std::string& threads = "1") {
  write_file(dir / "sim.json", R"({"n_records": )" + std::to_string(n) + R"(, "seed": )" +
                                   std::to_string(seed) + "}");
  REQUIRE(cli({"simulate", "--config", (dir / "sim.json").string(), "--out", (dir / "all.jsonl").string(),
               "--threads", threads})
              .code == 0);
  REQUIRE(cli({"split", "--in", (dir / "all.jsonl").string(), "--sizes", sizes, "--seed", "3", "--opt",
               (dir / "opt.jsonl").string(), "--cal", (dir / "cal.jsonl").string(), "--test",
               (dir / "test.jsonl").string()})
              .code == 0);
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"calibrate", "--bogus"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"calibrate", "--stop-score", "max", "--cal", "x", "--artifact", "y"}).code == kExitUsage);
}

TEST_CASE("simulate") {
  const auto dir = scratch_dir("cli_simulate");
  write_file(dir / "sim.json", R"({"n_records": 50, "seed": 1})");
  auto r = cli({"simulate", "--config", (dir / "sim.json").string(), "--out", (dir / "a.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(line_count(dir / "a.jsonl") == 50);
  CHECK(line_count(dir / "a.truth.jsonl") == 51);

  r = cli({"simulate", "--config", (dir / "sim.json").string(), "--out", (dir / "b.jsonl").string(), "--truth",
           (dir / "b.truth").string()});
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(slurp(dir / "a.truth.jsonl") == slurp(dir / "b.truth"));

  CHECK(cli({"simulate", "--config", (dir / "missing.json").string(), "--out", (dir / "c.jsonl").string()}).code ==
        kExitUsage);
  write_file(dir / "bad.json", R"({"n_records": 5, "first_answerable_turn_probs": [0.5, 0.6, 0, 0, 0]})");
  CHECK(cli({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "c.jsonl").string()}).code ==
        kExitUsage);
}

TEST_CASE("calibrate and evaluate") {
  const auto dir = scratch_dir("cli_calibrate");
  prepare(dir, 1500, "300,600,600");
  const auto cal = (dir / "cal.jsonl").string(), opt = (dir / "opt.jsonl").string(),
             test = (dir / "test.jsonl").string(), art = (dir / "art.json").string();

  SUBCASE("zero budgets reproduce the no-early-stop baseline") {
    REQUIRE(cli({"calibrate", "--cal", cal, "--budgets", "0,0,0", "--artifact", art}).code == 0);
    const auto a = load_artifact(art);
    for (int t = 0; t < 3; ++t) CHECK(a.state.allocation.budgets[t].q_t.kind == Threshold::Kind::pos_inf);
    CHECK(a.provenance.input_digests.at("cal") == sha256_file(cal));
    CHECK_FALSE(a.provenance.timestamp.has_value());
    REQUIRE(cli({"evaluate", "--test", test, "--artifact", art, "--report", (dir / "r.json").string()}).code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "r.json"));
    CHECK(rep["metrics"]["avg_turns"] == 3.0);
    CHECK(rep["coverage_vs_alpha"]["alpha"] == 0.1);
    CHECK(fs::exists(dir / "r.csv"));
    CHECK(line_count(dir / "r.csv") == 601);
  }

  SUBCASE("over-budget allocations exit with the constraint code") {
    const auto r = cli({"calibrate", "--cal", cal, "--budgets", "0.5,0.5,0.5", "--artifact", art});
    CHECK(r.code == kExitConstraint);
    CHECK(r.err.find("c_ans^final") != std::string::npos);
    CHECK_FALSE(fs::exists(art));
  }

  SUBCASE("grid search") {
    REQUIRE(cli({"calibrate", "--cal", cal, "--opt", opt, "--gridsearch", "--grid-steps", "20", "--artifact", art,
                 "--threads", "4"})
                .code == 0);
    const auto a = load_artifact(art);
    CHECK(a.state.allocation.satisfies_constraint());
    CHECK(a.grid_objective.has_value());
    CHECK(a.config.grid_steps == 20);

    // in-sample evaluation is conservative
    REQUIRE(cli({"evaluate", "--test", cal, "--artifact", art, "--report", (dir / "in.json").string()}).code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "in.json"));
    CHECK(rep["metrics"]["coverage_rate"].get<double>() >= 0.9);
  }

  SUBCASE("flag conflicts and missing inputs") {
    CHECK(cli({"calibrate", "--cal", cal, "--gridsearch", "--artifact", art}).code == kExitUsage);
    CHECK(cli({"calibrate", "--cal", cal, "--artifact", art}).code == kExitUsage);
    CHECK(cli({"calibrate", "--cal", cal, "--gridsearch", "--budgets", "0,0,0", "--opt", opt, "--artifact", art})
              .code == kExitUsage);
    CHECK(cli({"calibrate", "--cal", cal, "--budgets", "0,x,0", "--artifact", art}).code == kExitUsage);
  }

  SUBCASE("config file overrides flags") {
    write_file(dir / "run.json", R"({"alpha": 0.2, "budgets": [0, 0, 0]})");
    REQUIRE(cli({"calibrate", "--cal", cal, "--alpha", "0.05", "--budgets", "0.01,0,0", "--config",
                 (dir / "run.json").string(), "--artifact", art})
                .code == 0);
    const auto a = load_artifact(art);
    CHECK(a.config.alpha_total == 0.2);
    CHECK(a.state.allocation.budgets[0].alpha_t == 0.0);
  }

  SUBCASE("parse and schema errors") {
    write_file(dir / "broken.jsonl", "{\"id\": 1}\n");
    CHECK(cli({"calibrate", "--cal", (dir / "broken.jsonl").string(), "--budgets", "0,0,0", "--artifact", art})
              .code == kExitParse);
    write_file(dir / "schema.jsonl",
               R"({"id":"a","question":"q","gold_answers":[],"turns":[{"t":0,"passages":[],"samples":[{"text":"a"}]}]})"
               "\n");
    CHECK(cli({"calibrate", "--cal", (dir / "schema.jsonl").string(), "--budgets", "0,0,0", "--artifact", art})
              .code == kExitParse);
  }

  SUBCASE("version mismatch and empty test") {
    REQUIRE(cli({"calibrate", "--cal", cal, "--budgets", "0,0,0", "--artifact", art}).code == 0);
    auto j = nlohmann::json::parse(slurp(art));
    j["version"] = 99;
    write_file(dir / "v99.json", j.dump());
    CHECK(cli({"evaluate", "--test", test, "--artifact", (dir / "v99.json").string(), "--report",
               (dir / "r.json").string()})
              .code == kExitVersion);
    write_file(dir / "empty.jsonl", "");
    CHECK(cli({"evaluate", "--test", (dir / "empty.jsonl").string(), "--artifact", art, "--report",
               (dir / "r.json").string()})
              .code != 0);
  }
}

TEST_CASE("sweep") {
  const auto dir = scratch_dir("cli_sweep");
  prepare(dir, 2000, "300,700,1000");
  const auto common = std::vector<std::string>{"--opt", (dir / "opt.jsonl").string(), "--cal",
                                               (dir / "cal.jsonl").string(), "--test", (dir / "test.jsonl").string(),
                                               "--gridsearch", "--grid-steps", "8", "--threads", "4"};
  auto args = std::vector<std::string>{"sweep", "--alphas", "0.05,0.10,0.15,0.20,0.25", "--report",
                                       (dir / "s.json").string()};
  args.insert(args.end(), common.begin(), common.end());
  REQUIRE(cli(args).code == 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "s.json"));
  REQUIRE(rep["rows"].size() == 5);
  for (const auto& row : rep["rows"])
    CHECK(row["coverage"].get<double>() >= 1.0 - row["alpha"].get<double>() - 0.05);
  CHECK(line_count(dir / "s.csv") == 6);
  CHECK(slurp(dir / "s.csv").rfind("alpha,coverage,gold_retention,avg_turns,avg_set_size,answer_rate,composite_L\n", 0) == 0);

  args = {"sweep", "--alphas", "0.05,0.5", "--report", (dir / "two.json").string()};
  args.insert(args.end(), common.begin(), common.end());
  REQUIRE(cli(args).code == 0);
  const auto two = nlohmann::json::parse(slurp(dir / "two.json"))["rows"];
  REQUIRE(two.size() == 2);
  CHECK(two[1]["avg_set_size"].get<double>() < two[0]["avg_set_size"].get<double>());
  CHECK(two[1]["avg_turns"].get<double>() < two[0]["avg_turns"].get<double>());

  args = {"sweep", "--alphas", "0.1", "--report", (dir / "one.json").string()};
  args.insert(args.end(), common.begin(), common.end());
  REQUIRE(cli(args).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "one.json"))["rows"].size() == 1);
}

TEST_CASE("end-to-end determinism across runs and thread counts") {
  std::vector<std::string> artifacts, reports;
  for (const auto& [name, threads] : {std::pair{"det_a", "1"}, std::pair{"det_b", "1"}, std::pair{"det_c", "6"}}) {
    const auto dir = scratch_dir(std::string("cli_") + name);
    prepare(dir, 1200, "300,400,500", 21, threads);
    REQUIRE(cli({"calibrate", "--cal", (dir / "cal.jsonl").string(), "--opt", (dir / "opt.jsonl").string(),
                 "--gridsearch", "--grid-steps", "10", "--seed", "21", "--threads", threads, "--artifact",
                 (dir / "art.json").string()})
                .code == 0);
    REQUIRE(cli({"evaluate", "--test", (dir / "test.jsonl").string(), "--artifact", (dir / "art.json").string(),
                 "--report", (dir / "rep.json").string(), "--threads", threads})
                .code == 0);
    artifacts.push_back(slurp(dir / "art.json"));
    reports.push_back(slurp(dir / "rep.json") + slurp(dir / "rep.csv"));
  }
  CHECK(artifacts[0] == artifacts[1]);
  CHECK(artifacts[0] == artifacts[2]);
  CHECK(reports[0] == reports[1]);
  CHECK(reports[0] == reports[2]);
}
