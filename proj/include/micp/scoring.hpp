#pragma once

// Per-record, per-turn clustering summaries. Every calibration stage reads
// these instead of re-clustering raw samples.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "micp/clustering.hpp"
#include "micp/trajectory.hpp"

namespace micp {

enum class StopScoreMode {
  penalized_freq,  // max over clusters of frequency - eta * NE
  neg_entropy,     // -NE, higher means more concentrated
};

struct ScoringConfig {
  ClusteringConfig clustering;
  StopScoreMode stop_mode = StopScoreMode::penalized_freq;
  MatchRule match = MatchRule::exact;

  bool operator==(const ScoringConfig& o) const {
    return clustering.similarity_threshold == o.clustering.similarity_threshold &&
           clustering.eta == o.clustering.eta && clustering.mode == o.clustering.mode &&
           stop_mode == o.stop_mode && match == o.match;
  }
};

struct TurnSummary {
  std::vector<Cluster> clusters;
  std::vector<bool> has_gold;  // parallel to clusters
  // Identity used to merge clusters across turns: normalized representative
  // text, plus the representative's embedding in embedding mode.
  std::vector<std::string> rep_keys;
  std::vector<std::vector<double>> rep_embeddings;
  double entropy = 0.0;
  double stop_score = 0.0;
  bool gold_sampled = false;
  std::optional<double> gold_confidence;  // best penalized confidence of a gold cluster
};

struct RecordSummary {
  std::string id;
  std::vector<TurnSummary> turns;
  std::optional<int> first_gold_turn;

  int final_turn() const { return static_cast<int>(turns.size()) - 1; }
  bool answerable_by(int t) const { return first_gold_turn && *first_gold_turn <= t; }
  bool answerable() const { return first_gold_turn.has_value(); }
};

RecordSummary summarize(const TrajectoryRecord& record, const ScoringConfig& config);
std::vector<RecordSummary> summarize_all(std::span<const TrajectoryRecord> records,
                                         const ScoringConfig& config, unsigned threads = 1);

double stop_score(const TrajectoryRecord& record, int t, const ScoringConfig& config);

// Final turn index shared by every record; throws ConfigError otherwise.
int common_final_turn(std::span<const RecordSummary> records);

// Embedding mode when every sample carries an embedding, exact match otherwise.
ClusterMode infer_cluster_mode(std::span<const TrajectoryRecord> records);

}  // namespace micp
