#include <doctest.h>

#include <cmath>
#include <sstream>

#include "micp/errors.hpp"
#include "micp/random.hpp"
#include "micp/scoring.hpp"
#include "micp/simulator.hpp"

using namespace micp;

namespace {

std::string log_bytes(const SimOutput& s) {
  std::ostringstream out;
  write_trajectory_log(out, s.records);
  return out.str();
}

// Mean over records of the first turn whose samples contain the gold (T if never).
double oracle_stop_turn(const SimOutput& s) {
  double sum = 0;
  for (const auto& r : s.records) {
    int first = r.final_turn();
    for (const auto& turn : r.turns) {
      bool hit = false;
      for (const auto& a : turn.samples) hit = hit || matches_gold(a.text, r.gold_answers);
      if (hit) {
        first = turn.t;
        break;
      }
    }
    sum += first;
  }
  return sum / static_cast<double>(s.records.size());
}

}  // namespace

TEST_CASE("defaults") {
  SimConfig c;
  CHECK(c.T == 3);
  CHECK(c.M == 15);
  CHECK(c.K == 10);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("same config and seed give byte-identical logs, for any thread count") {
  SimConfig c;
  c.n_records = 300;
  c.seed = 99;
  const auto a = log_bytes(generate_trajectories(c, 1));
  CHECK(a == log_bytes(generate_trajectories(c, 1)));
  CHECK(a == log_bytes(generate_trajectories(c, 5)));
  c.seed = 100;
  CHECK(a != log_bytes(generate_trajectories(c, 1)));
}

TEST_CASE("generated records satisfy the schema and have the configured shape") {
  SimConfig c;
  c.n_records = 200;
  c.seed = 4;
  const auto s = generate_trajectories(c, 2);
  REQUIRE(s.records.size() == 200);
  for (const auto& r : s.records) {
    CHECK_NOTHROW(validate_record(r));
    CHECK(r.turns.size() == 4);
    CHECK(r.sample_count() == 15);
    for (const auto& t : r.turns) {
      CHECK(t.passages.size() == 10);
      for (std::size_t i = 1; i < t.passages.size(); ++i) CHECK(t.passages[i - 1].score >= t.passages[i].score);
    }
  }
  std::istringstream in(log_bytes(s));
  CHECK(parse_trajectory_log(in) == s.records);
  CHECK(infer_cluster_mode(s.records) == ClusterMode::embedding);
}

TEST_CASE("gold never appears before its first answerable turn") {
  SimConfig c;
  c.n_records = 500;
  c.seed = 6;
  const auto s = generate_trajectories(c);
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& r = s.records[i];
    const auto first = s.truth[i].first_answerable_turn;
    for (const auto& t : r.turns) {
      bool hit = false;
      for (const auto& a : t.samples) hit = hit || matches_gold(a.text, r.gold_answers);
      if (!first || t.t < *first) CHECK_FALSE(hit);
    }
  }
}

TEST_CASE("embedding clustering reproduces exact-match grouping") {
  SimConfig c;
  c.n_records = 100;
  c.seed = 7;
  const auto s = generate_trajectories(c);
  const ClusteringConfig emb{0.9, 0.1, ClusterMode::embedding};
  const ClusteringConfig exact{0.9, 0.1, ClusterMode::exact_match};
  for (const auto& r : s.records)
    for (const auto& t : r.turns) CHECK(cluster_answers(t.samples, emb) == cluster_answers(t.samples, exact));
}

TEST_CASE("limiting case: always answerable at turn 0 with a huge concentration") {
  SimConfig c;
  c.n_records = 500;
  c.first_answerable_turn_probs = {1, 0, 0, 0, 0};
  c.concentration_answerable = 1e9;
  const auto s = generate_trajectories(c);
  for (const auto& r : s.records) {
    bool hit = false;
    for (const auto& a : r.turns[0].samples) hit = hit || matches_gold(a.text, r.gold_answers);
    CHECK(hit);
  }
}

TEST_CASE("never-answerable fraction matches its configured probability") {
  SimConfig c;
  c.n_records = 5000;
  c.seed = 12;
  const auto s = generate_trajectories(c, 4);
  double never = 0;
  for (const auto& g : s.truth) never += !g.first_answerable_turn;
  const double p = c.first_answerable_turn_probs.back();
  const double se = std::sqrt(p * (1 - p) / 5000.0);
  CHECK(std::abs(never / 5000.0 - p) <= 2 * se);
}

TEST_CASE("later first-answerable mass raises the oracle stopping turn") {
  SimConfig easy;
  easy.n_records = 3000;
  easy.first_answerable_turn_probs = {0.6, 0.2, 0.1, 0.05, 0.05};
  SimConfig hard = easy;
  hard.first_answerable_turn_probs = {0.1, 0.2, 0.3, 0.3, 0.1};
  CHECK(oracle_stop_turn(generate_trajectories(easy, 4)) < oracle_stop_turn(generate_trajectories(hard, 4)));
}

TEST_CASE("config validation and JSON") {
  SimConfig c;
  c.first_answerable_turn_probs = {0.5, 0.5, 0.1, 0, 0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.gold_score_sd = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.M = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  CHECK_THROWS_AS(sim_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(sim_config_from_json(nlohmann::json{{"T", 2}}), ConfigError);
  CHECK_THROWS_AS(sim_config_from_json(nlohmann::json{{"n_records", "many"}}), ConfigError);
  const auto t2 = sim_config_from_json(
      nlohmann::json{{"T", 2}, {"first_answerable_turn_probs", {0.25, 0.25, 0.25, 0.25}}});
  CHECK(t2.T == 2);

  SimConfig d;
  d.seed = 77;
  d.n_records = 12;
  const auto back = sim_config_from_json(sim_config_to_json(d));
  CHECK(sim_config_to_json(back) == sim_config_to_json(d));
}

TEST_CASE("ground-truth sidecar") {
  SimConfig c;
  c.n_records = 20;
  const auto s = generate_trajectories(c);
  std::ostringstream out;
  write_ground_truth(out, c, s.truth);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  CHECK(header["generator"] == kGeneratorId);
  CHECK(header["config"]["n_records"] == 20);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["id"] == s.truth[rows].id);
    if (s.truth[rows].first_answerable_turn) CHECK(j["first_answerable_turn"] == *s.truth[rows].first_answerable_turn);
    else CHECK(j["first_answerable_turn"].is_null());
    ++rows;
  }
  CHECK(rows == 20);
}
