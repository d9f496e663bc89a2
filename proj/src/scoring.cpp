#include "micp/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "micp/errors.hpp"
#include "micp/parallel.hpp"

namespace micp {

namespace {

std::vector<double> unit(const std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

}  // namespace

RecordSummary summarize(const TrajectoryRecord& record, const ScoringConfig& config) {
  const std::size_t m = record.sample_count();
  if (m < 2)
    throw ConfigError("record '" + record.id + "': at least 2 samples per turn are required");

  RecordSummary out;
  out.id = record.id;
  out.turns.reserve(record.turns.size());
  for (const auto& turn : record.turns) {
    TurnSummary ts;
    ts.clusters = cluster_answers(turn.samples, config.clustering);
    ts.entropy = normalized_entropy(ts.clusters, m);

    std::vector<bool> sample_gold(turn.samples.size());
    for (std::size_t i = 0; i < turn.samples.size(); ++i)
      sample_gold[i] = matches_gold(turn.samples[i].text, record.gold_answers, config.match);
    ts.gold_sampled = std::find(sample_gold.begin(), sample_gold.end(), true) != sample_gold.end();

    for (const auto& c : ts.clusters) {
      const bool gold = std::any_of(c.members.begin(), c.members.end(),
                                    [&](std::size_t i) { return sample_gold[i]; });
      ts.has_gold.push_back(gold);
      if (gold && (!ts.gold_confidence || c.penalized_confidence > *ts.gold_confidence))
        ts.gold_confidence = c.penalized_confidence;
      ts.rep_keys.push_back(normalize_answer(c.representative));
      const auto& emb = turn.samples[c.members.front()].embedding;
      ts.rep_embeddings.push_back(emb ? unit(*emb) : std::vector<double>{});
    }

    ts.stop_score = config.stop_mode == StopScoreMode::penalized_freq
                        ? ts.clusters.front().penalized_confidence
                        : -ts.entropy;
    if (ts.gold_sampled && !out.first_gold_turn) out.first_gold_turn = turn.t;
    out.turns.push_back(std::move(ts));
  }
  return out;
}

std::vector<RecordSummary> summarize_all(std::span<const TrajectoryRecord> records,
                                         const ScoringConfig& config, unsigned threads) {
  std::vector<RecordSummary> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) { out[i] = summarize(records[i], config); });
  return out;
}

double stop_score(const TrajectoryRecord& record, int t, const ScoringConfig& config) {
  if (t < 0 || t > record.final_turn())
    throw ConfigError("turn " + std::to_string(t) + " out of range for record '" + record.id + "'");
  const auto& samples = record.turns[static_cast<std::size_t>(t)].samples;
  const auto clusters = cluster_answers(samples, config.clustering);
  if (config.stop_mode == StopScoreMode::neg_entropy)
    return -normalized_entropy(clusters, samples.size());
  // clusters are sorted by frequency, so the front one has the highest
  // penalized confidence (the penalty is shared by the whole turn)
  return clusters.front().penalized_confidence;
}

int common_final_turn(std::span<const RecordSummary> records) {
  if (records.empty()) throw ConfigError("empty record set");
  const int t = records.front().final_turn();
  for (const auto& r : records)
    if (r.final_turn() != t)
      throw ConfigError("records disagree on turn count ('" + r.id + "' has " +
                        std::to_string(r.final_turn() + 1) + " turns, expected " +
                        std::to_string(t + 1) + ")");
  return t;
}

ClusterMode infer_cluster_mode(std::span<const TrajectoryRecord> records) {
  for (const auto& r : records)
    for (const auto& turn : r.turns)
      for (const auto& s : turn.samples)
        if (!s.embedding) return ClusterMode::exact_match;
  return ClusterMode::embedding;
}

}  // namespace micp
