#pragma once

// Retrieval filtering: one global relevance threshold calibrated on the
// optimistic (max over turns) scores of retrievable gold passages.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "micp/conformal.hpp"
#include "micp/trajectory.hpp"

namespace micp {

struct RetrievalArtifact {
  Threshold q_ret;
  double alpha_ret = 0.1;
  std::size_t n_gold_scores = 0;

  bool operator==(const RetrievalArtifact&) const = default;
};

// Max score over every (turn, score) occurrence of one gold passage.
double optimistic_score(std::span<const std::pair<int, double>> occurrences);

// Optimistic scores of the gold passages that appear in at least one turn.
std::vector<double> retrievable_gold_scores(const TrajectoryRecord& record);

RetrievalArtifact calibrate_retrieval(std::span<const TrajectoryRecord> cal, double alpha_ret);

// Passages with score >= q_ret, input order preserved.
std::vector<PassageHit> filter_passages(const TurnLog& turn, const RetrievalArtifact& artifact);

struct RetentionTally {
  std::size_t retrievable = 0;
  std::size_t retained = 0;
};

// Counts retrievable gold passages of a record and those kept in some turn.
RetentionTally gold_retention(const TrajectoryRecord& record, const RetrievalArtifact& artifact);

}  // namespace micp
