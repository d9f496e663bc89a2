#include "micp/answer_set.hpp"

#include <algorithm>

#include "micp/errors.hpp"
#include "micp/parallel.hpp"

namespace micp {

bool PredictionSet::contains_gold() const {
  return std::any_of(clusters.begin(), clusters.end(), [](const SetEntry& e) { return e.contains_gold; });
}

std::optional<double> gold_confidence(const RecordSummary& record, int t_star) {
  std::optional<double> best;
  const int last = std::min(t_star, record.final_turn());
  for (int t = 0; t <= last; ++t) {
    const auto& g = record.turns[static_cast<std::size_t>(t)].gold_confidence;
    if (g && (!best || *g > *best)) best = g;
  }
  return best;
}

std::optional<double> gold_confidence(const TrajectoryRecord& record, int t_star,
                                      const ScoringConfig& config) {
  return gold_confidence(summarize(record, config), t_star);
}

Threshold calibrate_freq_threshold(std::span<const RecordSummary> cal,
                                   std::span<const StopOutcome> outcomes, double alpha) {
  if (cal.size() != outcomes.size()) throw ConfigError("calibrate_freq_threshold: size mismatch");
  std::vector<double> scores;
  for (std::size_t i = 0; i < cal.size(); ++i)
    if (auto g = gold_confidence(cal[i], outcomes[i].t_star)) scores.push_back(*g);
  if (scores.empty())
    throw ConstraintError("no calibration record has its gold answer sampled before stopping");
  return lower_quantile(scores, alpha);
}

PredictionSet build_prediction_set(const RecordSummary& record, const StopOutcome& outcome,
                                   const Threshold& q_freq, int final_turn,
                                   const ScoringConfig& config) {
  if (outcome.t_star > final_turn || outcome.t_star > record.final_turn())
    throw ConfigError("stopping turn beyond the last turn of record '" + record.id + "'");

  PredictionSet set;
  set.id = record.id;
  set.t_star = outcome.t_star;
  // normalized key / unit embedding of each entry's first representative
  std::vector<const std::string*> keys;
  std::vector<const std::vector<double>*> embeddings;

  const bool by_embedding = config.clustering.mode == ClusterMode::embedding;
  for (int t = 0; t <= outcome.t_star; ++t) {
    const auto& turn = record.turns[static_cast<std::size_t>(t)];
    for (std::size_t c = 0; c < turn.clusters.size(); ++c) {
      const auto& cluster = turn.clusters[c];
      if (!q_freq.admits(cluster.penalized_confidence)) continue;

      std::optional<std::size_t> same;
      for (std::size_t e = 0; e < set.clusters.size() && !same; ++e) {
        if (by_embedding) {
          double dot = 0.0;
          const auto& a = *embeddings[e];
          const auto& b = turn.rep_embeddings[c];
          for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
          if (dot >= config.clustering.similarity_threshold) same = e;
        } else if (*keys[e] == turn.rep_keys[c]) {
          same = e;
        }
      }

      if (same) {
        auto& entry = set.clusters[*same];
        entry.confidence = std::max(entry.confidence, cluster.penalized_confidence);
        entry.contains_gold = entry.contains_gold || turn.has_gold[c];
      } else {
        set.clusters.push_back({cluster.representative, cluster.penalized_confidence, t, turn.has_gold[c]});
        keys.push_back(&turn.rep_keys[c]);
        embeddings.push_back(&turn.rep_embeddings[c]);
      }
    }
  }
  set.cant_answer = outcome.t_star == final_turn;
  set.size = set.clusters.size() + (set.cant_answer ? 1 : 0);
  return set;
}

Evaluation evaluate(std::span<const TrajectoryRecord> test, const CalibrationState& state,
                    unsigned threads) {
  const auto summaries = summarize_all(test, state.scoring, threads);
  return evaluate(test, summaries, state, threads);
}

Evaluation evaluate(std::span<const TrajectoryRecord> test,
                    std::span<const RecordSummary> summaries, const CalibrationState& state,
                    unsigned threads) {
  if (test.empty()) throw ConfigError("evaluation needs a non-empty test set");
  if (summaries.size() != test.size()) throw ConfigError("evaluate: summary count mismatch");
  const int final_turn = common_final_turn(summaries);
  if (state.allocation.budgets.size() != static_cast<std::size_t>(final_turn + 1))
    throw ConfigError("calibration covers " + std::to_string(state.allocation.budgets.size()) +
                      " turns but test records have " + std::to_string(final_turn + 1));

  const std::size_t n = test.size();
  Evaluation ev;
  ev.records.resize(n);
  ev.sets.resize(n);
  std::vector<StopOutcome> outcomes(n);
  std::vector<RetentionTally> retention(n);
  std::vector<std::size_t> passages_kept(n);

  parallel_for(n, threads, [&](std::size_t i) {
    const auto& summary = summaries[i];
    outcomes[i] = apply_stopping(summary, state.allocation.budgets);
    ev.sets[i] = build_prediction_set(summary, outcomes[i], state.q_freq, final_turn, state.scoring);
    retention[i] = gold_retention(test[i], state.retrieval);
    for (const auto& turn : test[i].turns) passages_kept[i] += filter_passages(turn, state.retrieval).size();

    auto& row = ev.records[i];
    row.id = summary.id;
    row.t_star = outcomes[i].t_star;
    row.set_size = ev.sets[i].size;
    row.cant_answer = ev.sets[i].cant_answer;
    row.answerable_at_stop = summary.answerable_by(row.t_star);
    row.covered = row.answerable_at_stop ? ev.sets[i].contains_gold() : row.cant_answer;
  });

  auto& m = ev.metrics;
  m.n_records = n;
  std::size_t covered = 0, answered = 0, set_total = 0, retrievable = 0, retained = 0, kept = 0,
              turn_slots = 0;
  for (std::size_t i = 0; i < n; ++i) {
    covered += ev.records[i].covered;
    answered += !ev.records[i].cant_answer;
    set_total += ev.records[i].set_size;
    retrievable += retention[i].retrievable;
    retained += retention[i].retained;
    kept += passages_kept[i];
    turn_slots += test[i].turns.size();
  }
  const auto dn = static_cast<double>(n);
  m.coverage_rate = static_cast<double>(covered) / dn;
  m.answer_rate = static_cast<double>(answered) / dn;
  m.avg_set_size = static_cast<double>(set_total) / dn;
  m.n_retrievable_gold = retrievable;
  m.gold_retention_rate =
      retrievable == 0 ? 1.0 : static_cast<double>(retained) / static_cast<double>(retrievable);
  m.avg_passages_retained = static_cast<double>(kept) / static_cast<double>(turn_slots);
  m.avg_turns = average_turns(outcomes);
  m.per_turn = tally_stops(summaries, outcomes);
  m.gamma = state.allocation.gamma;
  m.composite_L = composite_objective(m.per_turn, m.avg_turns, m.gamma);
  m.alpha_total = state.allocation.alpha_total;
  m.alpha_ret = state.retrieval.alpha_ret;
  return ev;
}

}  // namespace micp
