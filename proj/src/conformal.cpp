#include "micp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "micp/errors.hpp"

namespace micp {

namespace {

constexpr double kIndexTolerance = 1e-9;

void check_scores(std::span<const double> scores) {
  if (scores.empty()) throw ConfigError("quantile of an empty score list");
  for (double s : scores)
    if (!std::isfinite(s)) throw ConfigError("quantile input contains a non-finite score");
}

// k-th smallest, 1-indexed.
double kth_smallest(std::span<const double> scores, std::size_t k) {
  std::vector<double> work(scores.begin(), scores.end());
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k - 1), work.end());
  return work[k - 1];
}

}  // namespace

std::size_t lower_quantile_index(std::size_t n, double alpha) {
  const double x = alpha * static_cast<double>(n + 1);
  return static_cast<std::size_t>(std::floor(x + kIndexTolerance));
}

std::size_t upper_quantile_index(std::size_t n, double alpha) {
  const double x = static_cast<double>(n + 1) * (1.0 - alpha);
  const double k = std::ceil(x - kIndexTolerance);
  return k <= 0.0 ? 0 : static_cast<std::size_t>(k);
}

Threshold lower_quantile(std::span<const double> scores, double alpha) {
  check_scores(scores);
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("lower_quantile: alpha must lie in [0, 1)");
  const std::size_t n = scores.size();
  const std::size_t k = lower_quantile_index(n, alpha);
  if (k < 1) return Threshold::neg_inf(alpha, n);
  return Threshold::finite(kth_smallest(scores, std::min(k, n)), alpha, n);
}

Threshold upper_quantile(std::span<const double> scores, double alpha) {
  check_scores(scores);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("upper_quantile: alpha must lie in [0, 1]");
  const std::size_t n = scores.size();
  const std::size_t k = upper_quantile_index(n, alpha);
  if (k > n) return Threshold::pos_inf(alpha, n);
  return Threshold::finite(kth_smallest(scores, std::max<std::size_t>(k, 1)), alpha, n);
}

Threshold upper_quantile_tie_safe(std::span<const double> scores, double alpha) {
  Threshold q = upper_quantile(scores, alpha);
  if (q.kind != Threshold::Kind::finite) return q;
  const std::size_t n = scores.size();
  const std::size_t k = std::max<std::size_t>(upper_quantile_index(n, alpha), 1);
  const auto at_or_above = static_cast<std::size_t>(
      std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= q.value; }));
  if (at_or_above <= n - k + 1) return q;

  bool any_above = false;
  double next = 0.0;
  for (double s : scores)
    if (s > q.value && (!any_above || s < next)) {
      next = s;
      any_above = true;
    }
  if (!any_above) return Threshold::pos_inf(alpha, n);
  q.value = next;
  return q;
}

}  // namespace micp
