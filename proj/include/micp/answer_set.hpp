#pragma once

// Final prediction sets with a "Can't Answer" label, the frequency threshold
// they are built with, and the evaluation metrics over a test set.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "micp/conformal.hpp"
#include "micp/retrieval.hpp"
#include "micp/scoring.hpp"
#include "micp/stopping.hpp"

namespace micp {

inline constexpr const char* kCantAnswer = "Can't Answer";

struct SetEntry {
  std::string representative;
  double confidence = 0.0;  // max penalized confidence over merged clusters
  int source_turn = 0;      // earliest turn the answer was admitted
  bool contains_gold = false;

  bool operator==(const SetEntry&) const = default;
};

struct PredictionSet {
  std::string id;
  int t_star = 0;
  std::vector<SetEntry> clusters;
  bool cant_answer = false;
  std::size_t size = 0;  // clusters.size() + cant_answer

  bool contains_gold() const;
  bool operator==(const PredictionSet&) const = default;
};

// Best penalized confidence of a gold-containing cluster over turns
// 0..t_star; nullopt when the gold is not sampled by then.
std::optional<double> gold_confidence(const RecordSummary& record, int t_star);
std::optional<double> gold_confidence(const TrajectoryRecord& record, int t_star,
                                      const ScoringConfig& config);

// Lower conformal quantile of gold confidences over records whose gold is
// sampled before stopping. Throws ConstraintError when there are none.
Threshold calibrate_freq_threshold(std::span<const RecordSummary> cal,
                                   std::span<const StopOutcome> outcomes, double alpha);

PredictionSet build_prediction_set(const RecordSummary& record, const StopOutcome& outcome,
                                   const Threshold& q_freq, int final_turn,
                                   const ScoringConfig& config);

// Everything learned by calibration.
struct CalibrationState {
  RetrievalArtifact retrieval;
  BudgetAllocation allocation;
  Threshold q_freq;
  ScoringConfig scoring;

  bool operator==(const CalibrationState&) const = default;
};

struct RecordResult {
  std::string id;
  int t_star = 0;
  std::size_t set_size = 0;
  bool covered = false;
  bool cant_answer = false;
  bool answerable_at_stop = false;

  bool operator==(const RecordResult&) const = default;
};

struct MetricsReport {
  std::size_t n_records = 0;
  double coverage_rate = 0.0;
  double gold_retention_rate = 1.0;
  std::size_t n_retrievable_gold = 0;
  double avg_passages_retained = 0.0;  // per turn, after filtering
  double avg_turns = 0.0;
  double avg_set_size = 0.0;
  double answer_rate = 0.0;
  double composite_L = 0.0;
  std::vector<TurnTally> per_turn;
  double alpha_total = 0.0;
  double alpha_ret = 0.0;
  double gamma = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

struct Evaluation {
  MetricsReport metrics;
  std::vector<RecordResult> records;
  std::vector<PredictionSet> sets;
};

// Two-case coverage: a record is covered when its gold is sampled by t_star
// and the set holds a gold cluster, or when it is not and the set abstains.
Evaluation evaluate(std::span<const TrajectoryRecord> test, const CalibrationState& state,
                    unsigned threads = 1);
Evaluation evaluate(std::span<const TrajectoryRecord> test,
                    std::span<const RecordSummary> summaries, const CalibrationState& state,
                    unsigned threads = 1);

}  // namespace micp
