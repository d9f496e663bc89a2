#pragma once

// Early stopping under a per-turn error budget.
//
// Budgets alpha_0..alpha_T are constrained by
//   sum_t (1 - c_ans^t) * alpha_t <= (1 - c_ans^final) * alpha
// where c_ans^t is the answerable fraction among records still active at t
// and c_ans^final the fraction of records whose gold answer is ever sampled.
// Each q_t bounds the fraction of active-but-unanswerable records that stop
// at turn t by alpha_t. At the final turn every remaining record stops.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "micp/conformal.hpp"
#include "micp/scoring.hpp"

namespace micp {

inline constexpr double kFractionClamp = 1e-6;
inline constexpr double kBudgetSlack = 1e-12;

struct TurnBudget {
  int t = 0;
  double alpha_t = 0.0;
  Threshold q_t;
  double c_ans_t = 1.0;
  std::size_t n_active = 0;
  std::size_t n_unanswerable = 0;
  bool empty_unanswerable = false;  // U_t was empty; q_t forced to PosInf

  bool operator==(const TurnBudget&) const = default;
};

struct BudgetAllocation {
  std::vector<TurnBudget> budgets;  // turns 0..T
  double alpha_total = 0.1;
  double c_ans_final = 0.0;
  double gamma = 1.0;
  StopScoreMode stop_score_mode = StopScoreMode::penalized_freq;

  // (1 - c_ans^final) * alpha - sum_t (1 - c_ans^t) * alpha_t
  double constraint_slack() const;
  bool satisfies_constraint() const { return constraint_slack() >= -kBudgetSlack; }

  bool operator==(const BudgetAllocation&) const = default;
};

struct StopOutcome {
  std::string id;
  int t_star = 0;
  bool early_stopped = false;
  std::vector<double> stop_scores;  // turns 0..t_star

  bool operator==(const StopOutcome&) const = default;
};

struct TurnTally {
  int t = 0;
  std::size_t n_corr = 0;   // stopped at t with the gold already sampled
  std::size_t n_wrong = 0;  // stopped at t without it
  double c_ans = 1.0;

  bool operator==(const TurnTally&) const = default;
};

// Indices of `active` whose gold answer is not sampled in turns 0..t.
std::vector<std::size_t> unanswerable_set(std::span<const RecordSummary> active, int t);
std::vector<std::size_t> unanswerable_set(std::span<const TrajectoryRecord> active, int t,
                                          MatchRule rule = MatchRule::exact);

double answerable_fraction(std::span<const RecordSummary> records);

// Sequential sweep over the shrinking active set; `alphas` covers turns 0..T.
std::vector<TurnBudget> calibrate_stop_thresholds(std::span<const RecordSummary> cal,
                                                  std::span<const double> alphas);
std::vector<TurnBudget> calibrate_stop_thresholds(std::span<const TrajectoryRecord> cal,
                                                  std::span<const double> alphas,
                                                  const ScoringConfig& config);

struct FinalBudget {
  bool feasible = false;
  double alpha_T = 0.0;
};

// Solves the budget constraint at equality for alpha_T. `one_minus_c_ans`
// covers turns 0..T; `prefix` covers turns 0..T-1.
FinalBudget derive_final_budget(std::span<const double> prefix,
                                std::span<const double> one_minus_c_ans, double alpha_total,
                                double c_ans_final);

// Calibrates thresholds for the given alpha_0..alpha_{T-1} and derives
// alpha_T. Returns nullopt when the prefix already exceeds the budget.
std::optional<BudgetAllocation> calibrate_allocation(std::span<const RecordSummary> cal,
                                                     std::span<const double> prefix,
                                                     double alpha_total, double gamma,
                                                     StopScoreMode mode);

StopOutcome apply_stopping(const RecordSummary& record, std::span<const TurnBudget> budgets);
StopOutcome apply_stopping(const TrajectoryRecord& record, std::span<const TurnBudget> budgets,
                           const ScoringConfig& config);

// Per-turn correct/wrong stop counts; c_ans^t is measured on the records
// whose stopping turn is >= t.
std::vector<TurnTally> tally_stops(std::span<const RecordSummary> records,
                                   std::span<const StopOutcome> outcomes);
double average_turns(std::span<const StopOutcome> outcomes);

double composite_objective(std::span<const TurnTally> tallies, double avg_turns, double gamma);

// In-sample objective of an allocation prefix: calibrate on `records`,
// stop, tally. nullopt when infeasible.
std::optional<double> allocation_objective(std::span<const RecordSummary> records,
                                           std::span<const double> prefix, double alpha_total,
                                           double gamma);

// Every prefix on the grid {0, alpha/(G-1), ..., alpha}^T in lexicographic order.
std::vector<std::vector<double>> grid_points(double alpha_total, int grid_steps, int final_turn);

struct GridSearchResult {
  BudgetAllocation allocation;
  std::vector<double> prefix;
  double objective = 0.0;
  std::size_t n_points = 0;
  std::size_t n_feasible = 0;
};

// Minimizes the composite objective over the grid; ties go to the
// lexicographically smallest prefix. Throws ConstraintError when no grid
// point is feasible.
GridSearchResult grid_search(std::span<const RecordSummary> opt, double alpha_total,
                             int grid_steps, double gamma, StopScoreMode mode,
                             unsigned threads = 1);

// Equal budgets alpha_t = alpha (1 - c_final) / sum_t (1 - c_ans^t), with the
// c_ans^t it induces found by fixed-point iteration. Returns the T-long prefix.
std::vector<double> uniform_allocation(std::span<const RecordSummary> records,
                                       double alpha_total);

}  // namespace micp
