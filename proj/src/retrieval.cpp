#include "micp/retrieval.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "micp/errors.hpp"

namespace micp {

double optimistic_score(std::span<const std::pair<int, double>> occurrences) {
  if (occurrences.empty())
    throw ConfigError("optimistic_score: passage never retrieved");
  double best = occurrences.front().second;
  for (const auto& [turn, score] : occurrences) best = std::max(best, score);
  return best;
}

std::vector<double> retrievable_gold_scores(const TrajectoryRecord& record) {
  std::map<std::string, std::vector<std::pair<int, double>>> seen;
  for (const auto& turn : record.turns)
    for (const auto& p : turn.passages)
      if (p.is_gold) seen[p.pid].emplace_back(turn.t, p.score);
  std::vector<double> out;
  out.reserve(seen.size());
  for (const auto& [pid, occ] : seen) out.push_back(optimistic_score(occ));
  return out;
}

RetrievalArtifact calibrate_retrieval(std::span<const TrajectoryRecord> cal, double alpha_ret) {
  if (!(alpha_ret > 0.0 && alpha_ret < 1.0))
    throw ConfigError("alpha_ret must lie strictly between 0 and 1");
  std::vector<double> pooled;
  for (const auto& r : cal) {
    auto scores = retrievable_gold_scores(r);
    pooled.insert(pooled.end(), scores.begin(), scores.end());
  }
  if (pooled.empty()) throw ConstraintError("no retrievable gold passages in calibration set");
  return {lower_quantile(pooled, alpha_ret), alpha_ret, pooled.size()};
}

std::vector<PassageHit> filter_passages(const TurnLog& turn, const RetrievalArtifact& artifact) {
  std::vector<PassageHit> kept;
  for (const auto& p : turn.passages)
    if (artifact.q_ret.admits(p.score)) kept.push_back(p);
  return kept;
}

RetentionTally gold_retention(const TrajectoryRecord& record, const RetrievalArtifact& artifact) {
  RetentionTally tally;
  for (double s : retrievable_gold_scores(record)) {
    ++tally.retrievable;
    if (artifact.q_ret.admits(s)) ++tally.retained;
  }
  return tally;
}

}  // namespace micp
