#pragma once

// Two-proportion statistics for before/after acceptance counts. P-values are
// carried as natural logs so tails far below double range stay comparable.

#include <cstdint>
#include <iosfwd>

#include "json.hpp"

namespace pregate {

// Group 1 is "before", group 2 is "after".
struct TwoByTwo {
  std::int64_t k1 = 0, n1 = 0;
  std::int64_t k2 = 0, n2 = 0;

  // Cell layout [[a, b], [c, d]]: rows are groups, columns success/failure.
  static TwoByTwo from_cells(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return {a, a + b, c, c + d};
  }
  void validate() const;  // throws Error{InvalidCounts}
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct PValue {
  double log_p = 0.0;  // natural log
  double value() const;
};

struct ZTest {
  double z = 0.0;
  PValue p;
};

// Inverse of the standard normal CDF, accurate to ~1e-15 relative.
double normal_quantile(double prob);
// log P(|Z| >= |z|); continued fraction in the far tail.
double log_two_sided_normal_tail(double z);

Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence = 0.95);
// Pooled-variance z for p2 - p1, no continuity correction. Throws Error{DegeneratePool}.
ZTest two_proportion_z(const TwoByTwo& t);
// Two-sided: sum of table probabilities not exceeding the observed one times (1 + 1e-7).
PValue fisher_exact(const TwoByTwo& t);
double risk_ratio(const TwoByTwo& t);  // (k2/n2) / (k1/n1)
double odds_ratio(const TwoByTwo& t);  // (k2/(n2-k2)) / (k1/(n1-k1))

struct ProportionComparison {
  TwoByTwo table;
  double rate_before = 0.0;
  double rate_after = 0.0;
  Interval ci_before;
  Interval ci_after;
  double delta_pp = 0.0;  // percentage points, after - before
  double risk_ratio = 0.0;
  double odds_ratio = 0.0;
  ZTest z;
  PValue fisher;
};

ProportionComparison compare_proportions(const TwoByTwo& t, double confidence = 0.95);

nlohmann::json to_json(const ProportionComparison& c);
// Acceptance-rate table (period rows with Wilson CI) then the comparative statistics.
void write_csv(std::ostream& out, const ProportionComparison& c);

}  // namespace pregate
