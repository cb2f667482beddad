#include "pregate/stats.hpp"

#include <algorithm>
#include <cstdio>
#include <string>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <vector>

#include "pregate/error.hpp"

namespace pregate {

namespace {

double log_choose(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double log_normal_pdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }

std::string format_log10(double log_p) {
  const double l10 = log_p / std::numbers::ln10;
  const double exponent = std::floor(l10);
  const double mantissa = std::pow(10.0, l10 - exponent);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3fe%+03d", mantissa, static_cast<int>(exponent));
  return buf;
}

}  // namespace

void TwoByTwo::validate() const {
  if (n1 <= 0 || n2 <= 0 || k1 < 0 || k2 < 0 || k1 > n1 || k2 > n2) {
    throw Error(ErrorCode::InvalidCounts, "need 0 <= k <= n and n > 0 in both groups");
  }
}

double PValue::value() const { return std::exp(log_p); }

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw Error(ErrorCode::InvalidCounts, "quantile probability must be in (0,1)");
  // Acklam's rational approximation followed by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (prob < lo) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - lo) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - prob;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

double log_two_sided_normal_tail(double z) {
  const double a = std::abs(z);
  if (a <= 8.0) return std::log(std::erfc(a / std::numbers::sqrt2));
  // Q(a) = pdf(a) / (a + 1/(a + 2/(a + 3/(a + ...))))
  double frac = a;
  for (int k = 200; k >= 1; --k) frac = a + k / frac;
  return std::numbers::ln2 + log_normal_pdf(a) - std::log(frac);
}

Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence) {
  if (n < 1 || k < 0 || k > n) throw Error(ErrorCode::InvalidCounts, "need 0 <= k <= n and n >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::InvalidCounts, "confidence must be in (0,1)");
  const double z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  Interval iv{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (k == 0) iv.lo = 0.0;
  if (k == n) iv.hi = 1.0;
  return iv;
}

ZTest two_proportion_z(const TwoByTwo& t) {
  t.validate();
  const double n1 = static_cast<double>(t.n1);
  const double n2 = static_cast<double>(t.n2);
  const double pooled = static_cast<double>(t.k1 + t.k2) / (n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) throw Error(ErrorCode::DegeneratePool, "pooled proportion is 0 or 1");
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
  const double diff = static_cast<double>(t.k2) / n2 - static_cast<double>(t.k1) / n1;
  ZTest out;
  out.z = diff / se;
  out.p.log_p = log_two_sided_normal_tail(out.z);
  return out;
}

PValue fisher_exact(const TwoByTwo& t) {
  t.validate();
  const std::int64_t col1 = t.k1 + t.k2;
  const std::int64_t total = t.n1 + t.n2;
  if (col1 == 0 || col1 == total) throw Error(ErrorCode::InvalidCounts, "Fisher test needs positive margins");

  const double log_denom = log_choose(total, col1);
  auto log_prob = [&](std::int64_t x) { return log_choose(t.n1, x) + log_choose(t.n2, col1 - x) - log_denom; };

  const double observed = log_prob(t.k1);
  const double cutoff = observed + std::log1p(1e-7);
  const std::int64_t lo = std::max<std::int64_t>(0, col1 - t.n2);
  const std::int64_t hi = std::min(col1, t.n1);
  std::vector<double> terms;
  for (std::int64_t x = lo; x <= hi; ++x) {
    const double lp = log_prob(x);
    if (lp <= cutoff) terms.push_back(lp);
  }
  const double peak = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double lp : terms) sum += std::exp(lp - peak);
  return {std::min(0.0, peak + std::log(sum))};
}

double risk_ratio(const TwoByTwo& t) {
  t.validate();
  if (t.k1 == 0) throw Error(ErrorCode::DivisionByZeroCell, "risk ratio undefined: no successes before");
  return (static_cast<double>(t.k2) / static_cast<double>(t.n2)) /
         (static_cast<double>(t.k1) / static_cast<double>(t.n1));
}

double odds_ratio(const TwoByTwo& t) {
  t.validate();
  if (t.k1 == 0 || t.n1 == t.k1 || t.n2 == t.k2) {
    throw Error(ErrorCode::DivisionByZeroCell, "odds ratio undefined: a zero cell in the denominator");
  }
  return (static_cast<double>(t.k2) / static_cast<double>(t.n2 - t.k2)) /
         (static_cast<double>(t.k1) / static_cast<double>(t.n1 - t.k1));
}

ProportionComparison compare_proportions(const TwoByTwo& t, double confidence) {
  t.validate();
  ProportionComparison c;
  c.table = t;
  c.rate_before = static_cast<double>(t.k1) / static_cast<double>(t.n1);
  c.rate_after = static_cast<double>(t.k2) / static_cast<double>(t.n2);
  c.ci_before = wilson_interval(t.k1, t.n1, confidence);
  c.ci_after = wilson_interval(t.k2, t.n2, confidence);
  c.delta_pp = 100.0 * (c.rate_after - c.rate_before);
  c.risk_ratio = risk_ratio(t);
  c.odds_ratio = odds_ratio(t);
  c.z = two_proportion_z(t);
  c.fisher = fisher_exact(t);
  return c;
}

nlohmann::json to_json(const ProportionComparison& c) {
  auto period = [](std::int64_t k, std::int64_t n, double rate, const Interval& ci) {
    return nlohmann::json{{"accepted", k}, {"total", n}, {"rate", rate}, {"ci_low", ci.lo}, {"ci_high", ci.hi}};
  };
  return {{"before", period(c.table.k1, c.table.n1, c.rate_before, c.ci_before)},
          {"after", period(c.table.k2, c.table.n2, c.rate_after, c.ci_after)},
          {"delta_pp", c.delta_pp},
          {"risk_ratio", c.risk_ratio},
          {"odds_ratio", c.odds_ratio},
          {"z", c.z.z},
          {"log_p_z", c.z.p.log_p},
          {"p_z", c.z.p.value()},
          {"log_p_fisher", c.fisher.log_p},
          {"p_fisher", c.fisher.value()}};
}

void write_csv(std::ostream& out, const ProportionComparison& c) {
  char buf[256];
  out << "period,accepted,total,rate_pct,ci_low_pct,ci_high_pct\n";
  std::snprintf(buf, sizeof buf, "before,%lld,%lld,%.1f,%.1f,%.1f\n", static_cast<long long>(c.table.k1),
                static_cast<long long>(c.table.n1), 100 * c.rate_before, 100 * c.ci_before.lo, 100 * c.ci_before.hi);
  out << buf;
  std::snprintf(buf, sizeof buf, "after,%lld,%lld,%.1f,%.1f,%.1f\n", static_cast<long long>(c.table.k2),
                static_cast<long long>(c.table.n2), 100 * c.rate_after, 100 * c.ci_after.lo, 100 * c.ci_after.hi);
  out << buf;
  out << "\nmetric,value\n";
  std::snprintf(buf, sizeof buf, "delta_pp,%+.1f\nrisk_ratio,%.2f\nodds_ratio,%.2f\nz,%.2f\n", c.delta_pp,
                c.risk_ratio, c.odds_ratio, c.z.z);
  out << buf;
  out << "p_z," << format_log10(c.z.p.log_p) << '\n';
  out << "p_fisher," << format_log10(c.fisher.log_p) << '\n';
}

}  // namespace pregate
