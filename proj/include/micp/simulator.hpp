#pragma once

// Synthetic, exchangeable trajectory logs with known ground truth.
//
// Each record draws the first turn at which its gold answer becomes
// available (or "never"). Before that turn the sampled answers come from a
// distribution over wrong answers with one randomly chosen mode whose mass
// is Beta(concentration_unanswerable, 1); from that turn on the gold answer
// gets mass Beta(concentration_answerable, 1). The remaining mass is spread
// by a flat Dirichlet. Answers carry one-hot embeddings, so embedding
// clustering reproduces exact-match grouping.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "micp/trajectory.hpp"

namespace micp {

struct SimConfig {
  std::size_t n_records = 1000;
  int T = 3;
  std::size_t M = 15;
  std::size_t K = 10;
  // length T + 2; the last entry is the probability of never becoming answerable
  std::vector<double> first_answerable_turn_probs{0.35, 0.25, 0.15, 0.10, 0.15};
  double concentration_answerable = 4.0;
  double concentration_unanswerable = 0.1;
  double gold_score_mean = 1.5;
  double gold_score_sd = 1.0;
  double distractor_score_mean = 0.0;
  double distractor_score_sd = 1.0;
  double gold_retrievable_prob = 0.7;  // per turn and gold passage
  std::size_t n_gold_passages = 2;
  std::size_t vocab_size = 8;  // wrong answers per record
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json sim_config_to_json(const SimConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
SimConfig sim_config_from_json(const nlohmann::json& j);

struct GroundTruth {
  std::string id;
  std::optional<int> first_answerable_turn;  // nullopt: never answerable

  bool operator==(const GroundTruth&) const = default;
};

struct SimOutput {
  std::vector<TrajectoryRecord> records;
  std::vector<GroundTruth> truth;
};

// Record i is generated from its own sub-seed, so the thread count does not
// change the output.
SimOutput generate_trajectories(const SimConfig& config, unsigned threads = 1);

// First line: generator header; then one {"id", "first_answerable_turn"} per record.
void write_ground_truth(std::ostream& out, const SimConfig& config,
                        const std::vector<GroundTruth>& truth);

}  // namespace micp
