#include "micp/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "micp/errors.hpp"
#include "micp/parallel.hpp"

namespace micp {

namespace {

double clamp_fraction(double x) { return std::clamp(x, kFractionClamp, 1.0 - kFractionClamp); }

}  // namespace

double BudgetAllocation::constraint_slack() const {
  double used = 0.0;
  for (const auto& b : budgets) used += (1.0 - b.c_ans_t) * b.alpha_t;
  return (1.0 - c_ans_final) * alpha_total - used;
}

std::vector<std::size_t> unanswerable_set(std::span<const RecordSummary> active, int t) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (!active[i].answerable_by(t)) out.push_back(i);
  return out;
}

std::vector<std::size_t> unanswerable_set(std::span<const TrajectoryRecord> active, int t,
                                          MatchRule rule) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const auto& r = active[i];
    bool seen = false;
    for (const auto& turn : r.turns) {
      if (turn.t > t) break;
      for (const auto& s : turn.samples)
        if (matches_gold(s.text, r.gold_answers, rule)) {
          seen = true;
          break;
        }
      if (seen) break;
    }
    if (!seen) out.push_back(i);
  }
  return out;
}

double answerable_fraction(std::span<const RecordSummary> records) {
  if (records.empty()) return 0.0;
  const auto n = std::count_if(records.begin(), records.end(),
                               [](const RecordSummary& r) { return r.answerable(); });
  return static_cast<double>(n) / static_cast<double>(records.size());
}

std::vector<TurnBudget> calibrate_stop_thresholds(std::span<const RecordSummary> cal,
                                                  std::span<const double> alphas) {
  const int final_turn = common_final_turn(cal);
  if (alphas.size() != static_cast<std::size_t>(final_turn + 1))
    throw ConfigError("expected " + std::to_string(final_turn + 1) + " per-turn budgets, got " +
                      std::to_string(alphas.size()));
  for (double a : alphas)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("per-turn budgets must be finite and >= 0");

  std::vector<std::size_t> active(cal.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;

  std::vector<TurnBudget> budgets;
  budgets.reserve(alphas.size());
  for (int t = 0; t <= final_turn; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    TurnBudget b;
    b.t = t;
    b.alpha_t = alphas[ti];
    b.n_active = active.size();

    std::vector<double> unanswerable_scores;
    for (std::size_t i : active)
      if (!cal[i].answerable_by(t)) unanswerable_scores.push_back(cal[i].turns[ti].stop_score);
    b.n_unanswerable = unanswerable_scores.size();
    b.c_ans_t = b.n_active == 0
                    ? 1.0
                    : 1.0 - static_cast<double>(b.n_unanswerable) / static_cast<double>(b.n_active);

    if (unanswerable_scores.empty()) {
      b.q_t = Threshold::pos_inf(b.alpha_t, 0);
      b.empty_unanswerable = true;
    } else {
      // alpha_T is an accounting quantity and may exceed 1
      b.q_t = upper_quantile_tie_safe(unanswerable_scores, std::min(b.alpha_t, 1.0));
      b.q_t.level = b.alpha_t;
    }

    if (t < final_turn) {
      std::vector<std::size_t> still;
      still.reserve(active.size());
      for (std::size_t i : active)
        if (!b.q_t.admits(cal[i].turns[ti].stop_score)) still.push_back(i);
      active = std::move(still);
    }
    budgets.push_back(std::move(b));
  }
  return budgets;
}

std::vector<TurnBudget> calibrate_stop_thresholds(std::span<const TrajectoryRecord> cal,
                                                  std::span<const double> alphas,
                                                  const ScoringConfig& config) {
  const auto summaries = summarize_all(cal, config);
  return calibrate_stop_thresholds(summaries, alphas);
}

FinalBudget derive_final_budget(std::span<const double> prefix,
                                std::span<const double> one_minus_c_ans, double alpha_total,
                                double c_ans_final) {
  if (one_minus_c_ans.size() != prefix.size() + 1)
    throw ConfigError("derive_final_budget: need one answerability statistic per turn");
  double numerator = (1.0 - c_ans_final) * alpha_total;
  for (std::size_t t = 0; t < prefix.size(); ++t) numerator -= one_minus_c_ans[t] * prefix[t];
  if (numerator < -kBudgetSlack) return {false, 0.0};
  numerator = std::max(numerator, 0.0);
  return {true, numerator / std::max(one_minus_c_ans.back(), kFractionClamp)};
}

std::optional<BudgetAllocation> calibrate_allocation(std::span<const RecordSummary> cal,
                                                     std::span<const double> prefix,
                                                     double alpha_total, double gamma,
                                                     StopScoreMode mode) {
  const int final_turn = common_final_turn(cal);
  if (prefix.size() != static_cast<std::size_t>(final_turn))
    throw ConfigError("expected " + std::to_string(final_turn) +
                      " budgets (alpha_0..alpha_{T-1}), got " + std::to_string(prefix.size()));

  std::vector<double> alphas(prefix.begin(), prefix.end());
  alphas.push_back(0.0);  // alpha_T does not influence the sweep before turn T
  auto budgets = calibrate_stop_thresholds(cal, alphas);

  std::vector<double> one_minus_c;
  for (const auto& b : budgets) one_minus_c.push_back(1.0 - b.c_ans_t);
  const double c_final = answerable_fraction(cal);
  const auto final_budget = derive_final_budget(prefix, one_minus_c, alpha_total, c_final);
  if (!final_budget.feasible) return std::nullopt;

  alphas.back() = final_budget.alpha_T;
  budgets = calibrate_stop_thresholds(cal, alphas);

  BudgetAllocation alloc;
  alloc.budgets = std::move(budgets);
  alloc.alpha_total = alpha_total;
  alloc.c_ans_final = c_final;
  alloc.gamma = gamma;
  alloc.stop_score_mode = mode;
  if (!alloc.satisfies_constraint()) return std::nullopt;
  return alloc;
}

StopOutcome apply_stopping(const RecordSummary& record, std::span<const TurnBudget> budgets) {
  const int final_turn = record.final_turn();
  if (budgets.size() != static_cast<std::size_t>(final_turn + 1))
    throw ConfigError("budgets do not cover every turn of record '" + record.id + "'");
  StopOutcome out;
  out.id = record.id;
  out.t_star = final_turn;
  for (int t = 0; t <= final_turn; ++t) {
    const double s = record.turns[static_cast<std::size_t>(t)].stop_score;
    out.stop_scores.push_back(s);
    if (t < final_turn && budgets[static_cast<std::size_t>(t)].q_t.admits(s)) {
      out.t_star = t;
      break;
    }
  }
  out.early_stopped = out.t_star < final_turn;
  return out;
}

StopOutcome apply_stopping(const TrajectoryRecord& record, std::span<const TurnBudget> budgets,
                           const ScoringConfig& config) {
  return apply_stopping(summarize(record, config), budgets);
}

std::vector<TurnTally> tally_stops(std::span<const RecordSummary> records,
                                   std::span<const StopOutcome> outcomes) {
  if (records.size() != outcomes.size()) throw ConfigError("tally_stops: size mismatch");
  if (records.empty()) return {};
  const int final_turn = common_final_turn(records);
  std::vector<TurnTally> tallies(static_cast<std::size_t>(final_turn + 1));
  for (int t = 0; t <= final_turn; ++t) {
    auto& tally = tallies[static_cast<std::size_t>(t)];
    tally.t = t;
    std::size_t active = 0, answerable = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (outcomes[i].t_star < t) continue;
      ++active;
      const bool ans = records[i].answerable_by(t);
      if (ans) ++answerable;
      if (outcomes[i].t_star == t) ++(ans ? tally.n_corr : tally.n_wrong);
    }
    tally.c_ans = active == 0 ? 1.0 : static_cast<double>(answerable) / static_cast<double>(active);
  }
  return tallies;
}

double average_turns(std::span<const StopOutcome> outcomes) {
  if (outcomes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& o : outcomes) sum += o.t_star;
  return sum / static_cast<double>(outcomes.size());
}

double composite_objective(std::span<const TurnTally> tallies, double avg_turns, double gamma) {
  double reward = 0.0, penalty = 0.0;
  for (const auto& t : tallies) {
    if (t.n_corr + t.n_wrong == 0) continue;
    const double c = clamp_fraction(t.c_ans);
    reward += static_cast<double>(t.n_corr) / c;
    penalty += static_cast<double>(t.n_wrong) / clamp_fraction(1.0 - c);
  }
  return gamma * avg_turns - reward / std::max(penalty, kFractionClamp);
}

std::optional<double> allocation_objective(std::span<const RecordSummary> records,
                                           std::span<const double> prefix, double alpha_total,
                                           double gamma) {
  auto alloc = calibrate_allocation(records, prefix, alpha_total, gamma,
                                    StopScoreMode::penalized_freq);
  if (!alloc) return std::nullopt;
  std::vector<StopOutcome> outcomes;
  outcomes.reserve(records.size());
  for (const auto& r : records) outcomes.push_back(apply_stopping(r, alloc->budgets));
  return composite_objective(tally_stops(records, outcomes), average_turns(outcomes), gamma);
}

std::vector<std::vector<double>> grid_points(double alpha_total, int grid_steps, int final_turn) {
  if (grid_steps < 2) throw ConfigError("grid needs at least 2 steps per dimension");
  if (final_turn < 0) throw ConfigError("negative final turn");
  std::vector<double> values(static_cast<std::size_t>(grid_steps));
  for (int i = 0; i < grid_steps; ++i) values[static_cast<std::size_t>(i)] = alpha_total * i / (grid_steps - 1);

  std::vector<std::vector<double>> points{{}};
  for (int d = 0; d < final_turn; ++d) {
    std::vector<std::vector<double>> next;
    next.reserve(points.size() * values.size());
    for (const auto& p : points)
      for (double v : values) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

GridSearchResult grid_search(std::span<const RecordSummary> opt, double alpha_total,
                             int grid_steps, double gamma, StopScoreMode mode, unsigned threads) {
  if (opt.empty()) throw ConfigError("grid search needs a non-empty optimization set");
  if (!(alpha_total > 0.0 && alpha_total < 1.0)) throw ConfigError("alpha must lie strictly between 0 and 1");
  const int final_turn = common_final_turn(opt);
  const auto points = grid_points(alpha_total, grid_steps, final_turn);

  std::vector<std::optional<double>> objective(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    objective[i] = allocation_objective(opt, points[i], alpha_total, gamma);
  });

  GridSearchResult result;
  result.n_points = points.size();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!objective[i]) continue;
    ++result.n_feasible;
    // points are in lexicographic order, so strict < keeps the smallest prefix on ties
    if (!best || *objective[i] < *objective[*best]) best = i;
  }
  if (!best) throw ConstraintError("every grid point violates the error-budget constraint");

  result.prefix = points[*best];
  result.objective = *objective[*best];
  result.allocation = *calibrate_allocation(opt, result.prefix, alpha_total, gamma, mode);
  return result;
}

std::vector<double> uniform_allocation(std::span<const RecordSummary> records, double alpha_total) {
  const int final_turn = common_final_turn(records);
  const double c_final = answerable_fraction(records);
  std::vector<double> alphas(static_cast<std::size_t>(final_turn + 1), 0.0);
  double u = 0.0;
  for (int iter = 0; iter < 50; ++iter) {
    std::fill(alphas.begin(), alphas.end(), u);
    const auto budgets = calibrate_stop_thresholds(records, alphas);
    double weight = 0.0;
    for (const auto& b : budgets) weight += 1.0 - b.c_ans_t;
    const double next = (1.0 - c_final) * alpha_total / std::max(weight, kFractionClamp);
    if (std::abs(next - u) <= 1e-12) break;
    u = next;
  }
  return std::vector<double>(static_cast<std::size_t>(final_turn), u);
}

}  // namespace micp
