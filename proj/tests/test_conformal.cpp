#include <doctest.h>

#include <cmath>
#include <numeric>

#include "micp/conformal.hpp"
#include "micp/errors.hpp"
#include "micp/random.hpp"
#include "test_util.hpp"

using namespace micp;
using micp::test::kth_smallest;

namespace {

// Random multiset; `dup` draws from a handful of values to force ties.
std::vector<double> random_scores(Rng& rng, bool dup) {
  const std::size_t n = 1 + rng.below(50);
  std::vector<double> v(n);
  for (auto& x : v) x = dup ? static_cast<double>(rng.below(4)) * 0.25 : rng.normal(0, 1);
  return v;
}

// alpha = pct / 100, with the index computed in integer arithmetic.
long lower_k(std::size_t n, long pct) { return pct * static_cast<long>(n + 1) / 100; }
long upper_k(std::size_t n, long pct) {
  const long num = (100 - pct) * static_cast<long>(n + 1);
  return (num + 99) / 100;
}

}  // namespace

TEST_CASE("lower_quantile examples") {
  std::vector<double> tenths;
  for (int i = 1; i <= 10; ++i) tenths.push_back(i / 10.0);
  auto q = lower_quantile(tenths, 0.2);
  CHECK(q.kind == Threshold::Kind::finite);
  CHECK(q.value == 0.2);
  CHECK(q.n == 10);
  CHECK(q.level == 0.2);

  const std::vector<double> nine(9, 1.0);
  CHECK(lower_quantile(nine, 0.05).kind == Threshold::Kind::neg_inf);

  const std::vector<double> one{5.0};
  q = lower_quantile(one, 0.6);
  CHECK(q.kind == Threshold::Kind::finite);
  CHECK(q.value == 5.0);
}

TEST_CASE("upper_quantile examples") {
  std::vector<double> v{0.7, 0.1, 0.9, 0.3, 0.5, 0.2, 0.8, 0.4, 0.6};
  auto q = upper_quantile(v, 0.1);
  CHECK(q.kind == Threshold::Kind::finite);
  CHECK(q.value == 0.9);

  CHECK(upper_quantile(v, 1e-9).kind == Threshold::Kind::pos_inf);
  CHECK(upper_quantile(v, 0.0).kind == Threshold::Kind::pos_inf);

  std::vector<double> nineteen;
  for (int i = 19; i >= 1; --i) nineteen.push_back(i);
  q = upper_quantile(nineteen, 0.05);
  CHECK(q.value == 19.0);
  CHECK(upper_quantile_index(19, 0.05) == 19);
}

TEST_CASE("quantile errors") {
  const std::vector<double> empty;
  CHECK_THROWS_AS(lower_quantile(empty, 0.1), ConfigError);
  CHECK_THROWS_AS(upper_quantile(empty, 0.1), ConfigError);
  const std::vector<double> v{1.0, 2.0};
  CHECK_THROWS_AS(lower_quantile(v, 1.0), ConfigError);
  CHECK_THROWS_AS(lower_quantile(v, -0.1), ConfigError);
  CHECK_THROWS_AS(upper_quantile(v, 1.5), ConfigError);
  const std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(lower_quantile(bad, 0.1), ConfigError);
}

TEST_CASE("threshold sentinels") {
  CHECK(Threshold::neg_inf(0.1, 3).admits(-1e308));
  CHECK_FALSE(Threshold::pos_inf(0.1, 3).admits(1e308));
  CHECK(Threshold::finite(0.5, 0.1, 3).admits(0.5));
  CHECK_FALSE(Threshold::finite(0.5, 0.1, 3).admits(0.4999));
}

TEST_CASE("oracle: both quantiles match sort-and-index on 1000 multisets") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto v = random_scores(rng, trial % 2 == 0);
    for (long pct = 1; pct <= 99; pct += 7) {
      const double alpha = pct / 100.0;
      const auto lo = lower_quantile(v, alpha);
      const auto want_lo = kth_smallest(v, lower_k(v.size(), pct));
      if (want_lo) {
        REQUIRE(lo.kind == Threshold::Kind::finite);
        CHECK(lo.value == *want_lo);
      } else {
        CHECK(lo.kind == Threshold::Kind::neg_inf);
      }
      const auto hi = upper_quantile(v, alpha);
      const auto want_hi = kth_smallest(v, upper_k(v.size(), pct));
      if (want_hi) {
        REQUIRE(hi.kind == Threshold::Kind::finite);
        CHECK(hi.value == *want_hi);
      } else {
        CHECK(hi.kind == Threshold::Kind::pos_inf);
      }
    }
  }
}

TEST_CASE("property: monotone in alpha") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = random_scores(rng, trial % 3 == 0);
    auto as_num = [](const Threshold& q) {
      if (q.kind == Threshold::Kind::neg_inf) return -HUGE_VAL;
      if (q.kind == Threshold::Kind::pos_inf) return HUGE_VAL;
      return q.value;
    };
    double prev_lo = -HUGE_VAL, prev_hi = HUGE_VAL;
    for (int pct = 0; pct < 100; ++pct) {
      const double lo = as_num(lower_quantile(v, pct / 100.0));
      const double hi = as_num(upper_quantile(v, pct / 100.0));
      CHECK(lo >= prev_lo);
      CHECK(hi <= prev_hi);
      prev_lo = lo;
      prev_hi = hi;
    }
  }
}

TEST_CASE("property: tie-safe upper quantile admits at most n-k+1 scores") {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto v = random_scores(rng, true);
    for (int pct = 1; pct <= 100; pct += 3) {
      const double alpha = pct / 100.0;
      const auto q = upper_quantile_tie_safe(v, alpha);
      const long k = std::max(1L, upper_k(v.size(), pct));
      const long admitted = std::count_if(v.begin(), v.end(), [&](double s) { return q.admits(s); });
      if (k > static_cast<long>(v.size())) {
        CHECK(q.kind == Threshold::Kind::pos_inf);
        continue;
      }
      CHECK(admitted <= static_cast<long>(v.size()) - k + 1);
      // and it is the least such cut among the observed values
      const auto plain = upper_quantile(v, alpha);
      if (q.kind == Threshold::Kind::finite) CHECK(q.value >= plain.value);
    }
  }
}

TEST_CASE("property: leave-one-out miscoverage of lower_quantile is at most alpha") {
  Rng rng(77);
  const std::vector<double> alphas{0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  for (double alpha : alphas) {
    std::vector<double> rates;
    for (int draw = 0; draw < 1000; ++draw) {
      const auto v = random_scores(rng, draw % 2 == 0);
      if (v.size() < 2) continue;
      std::size_t below = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        std::vector<double> rest;
        for (std::size_t j = 0; j < v.size(); ++j)
          if (j != i) rest.push_back(v[j]);
        if (!lower_quantile(rest, alpha).admits(v[i])) ++below;
      }
      rates.push_back(static_cast<double>(below) / static_cast<double>(v.size()));
    }
    const double n = static_cast<double>(rates.size());
    const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / n;
    double var = 0;
    for (double r : rates) var += (r - mean) * (r - mean);
    const double se = std::sqrt(var / (n - 1) / n);
    CHECK_MESSAGE(mean <= alpha + 2 * se, "alpha " << alpha << " mean " << mean);
  }
}
