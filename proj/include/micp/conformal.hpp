#pragma once

// Split-conformal quantile primitives with explicit finite-sample index rules.

#include <cstddef>
#include <span>

namespace micp {

// A calibrated cut-off used with "score >= threshold" tests. The sentinels
// keep the degenerate quantile indices representable: NegInf admits every
// score, PosInf admits none.
struct Threshold {
  enum class Kind { finite, neg_inf, pos_inf };

  Kind kind = Kind::finite;
  double value = 0.0;  // meaningful only when kind == finite
  double level = 0.0;  // the miscoverage level the threshold was computed at
  std::size_t n = 0;   // calibration sample count

  static Threshold neg_inf(double level, std::size_t n) { return {Kind::neg_inf, 0.0, level, n}; }
  static Threshold pos_inf(double level, std::size_t n) { return {Kind::pos_inf, 0.0, level, n}; }
  static Threshold finite(double value, double level, std::size_t n) {
    return {Kind::finite, value, level, n};
  }

  bool admits(double score) const {
    switch (kind) {
      case Kind::neg_inf: return true;
      case Kind::pos_inf: return false;
      case Kind::finite: break;
    }
    return score >= value;
  }

  bool operator==(const Threshold&) const = default;
};

// k = floor(alpha * (n + 1)); NegInf when k < 1, else the k-th smallest score.
// For an exchangeable new score s: P(s < threshold) <= k / (n + 1) <= alpha.
Threshold lower_quantile(std::span<const double> scores, double alpha);

// k = ceil((n + 1) * (1 - alpha)); PosInf when k > n, else the k-th smallest.
// alpha = 0 is accepted and always yields PosInf.
Threshold upper_quantile(std::span<const double> scores, double alpha);

// upper_quantile adjusted for ties: if more than n - k + 1 scores sit at or
// above the k-th smallest, the cut is raised to the next distinct score (or
// PosInf), so that at most n - k + 1 calibration scores pass a ">=" test.
Threshold upper_quantile_tie_safe(std::span<const double> scores, double alpha);

// Index rules exposed for reporting and tests. The small tolerance absorbs
// representation error such as (1 - 0.1) * 10 = 9.000000000000002.
std::size_t lower_quantile_index(std::size_t n, double alpha);
std::size_t upper_quantile_index(std::size_t n, double alpha);

}  // namespace micp
