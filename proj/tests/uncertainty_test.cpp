#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "nrssl/uncertainty.hpp"
#include "support/oracle.hpp"
#include "support/property.hpp"

using namespace nrssl;

namespace {

Assignment positive(double score, double overlap = 0.9) {
  Assignment a;
  a.is_positive = true;
  a.max_iou = overlap;
  a.matched_index = 0;
  a.assigned_category = Category(0);
  a.matched_score = score;
  return a;
}

UncertaintyConfig defaults(std::int64_t total = 2000) {
  UncertaintyConfig c;
  c.total_iterations = total;
  return c;
}

double to_double(const oracle::Real& r) { return r.convert_to<double>(); }

}  // namespace

TEST(UncertaintyConfig, DefaultsAndValidation) {
  const UncertaintyConfig c;
  EXPECT_EQ(c.lower_bound, 0.5);
  EXPECT_EQ(c.upper_bound, 0.7);
  EXPECT_EQ(c.late_upper_bound, 0.8);
  EXPECT_EQ(c.sharpness, 15.0);
  EXPECT_EQ(c.schedule_exponent, 0.1);
  EXPECT_EQ(c.effective_switch_iteration(), 2 * c.total_iterations / 3);
  EXPECT_NO_THROW(c.validate());

  UncertaintyConfig bad = c;
  bad.upper_bound = 0.4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.late_upper_bound = 0.45;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.switch_iteration = c.total_iterations + 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.schedule_exponent = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(NormalizedIou, Examples) {
  UncertaintyConfig c = defaults();
  c.late_upper_bound.reset();
  EXPECT_DOUBLE_EQ(normalized_iou(0.6, c, 0), 0.5);
  EXPECT_EQ(normalized_iou(0.75, c, 0), 1.0);
  EXPECT_EQ(normalized_iou(0.5, c, 0), 1.0);
  EXPECT_EQ(normalized_iou(0.3, c, 0), 1.0);
  // sigmoid(-7.5) = 1 / (1 + e^7.5); e^-7.5 alone would be 5.5308e-4.
  EXPECT_NEAR(normalized_iou(0.55, c, 0), 5.527786369235995e-4, 1e-15);
  EXPECT_NEAR(normalized_iou(0.55, c, 0), to_double(oracle::normalized_iou(
                                              oracle::Real("0.55"), oracle::Real("0.5"),
                                              oracle::Real("0.7"), 15)),
              1e-15);
}

TEST(NormalizedIou, UpperBoundSwitchesLate) {
  const UncertaintyConfig c = defaults(3000);
  EXPECT_EQ(upper_bound_at(c, 1999), 0.7);
  EXPECT_EQ(upper_bound_at(c, 2000), 0.8);
  // 0.75 lies above the early bound but inside the late interval.
  EXPECT_EQ(normalized_iou(0.75, c, 0), 1.0);
  EXPECT_LT(normalized_iou(0.75, c, 2500), 1.0);
  EXPECT_DOUBLE_EQ(normalized_iou(0.65, c, 2500), 0.5);
}

TEST(Uncertainty, Examples) {
  Assignment neg;
  EXPECT_EQ(uncertainty(neg, 0.3), 0.0);
  EXPECT_EQ(uncertainty(positive(1.0), 1.0), 0.0);
  EXPECT_NEAR(uncertainty(positive(0.8), 0.5), 0.6, 1e-15);
  Assignment no_score = positive(0.5);
  no_score.matched_score.reset();
  EXPECT_THROW(uncertainty(no_score, 0.5), std::invalid_argument);
  EXPECT_THROW(uncertainty(positive(0.5), 0.0), std::invalid_argument);
}

TEST(Beta, Examples) {
  const UncertaintyConfig c = defaults(2000);
  EXPECT_EQ(beta(0, c), 0.0);
  EXPECT_EQ(beta(2000, c), 1.0);
  EXPECT_NEAR(beta(1000, c), 0.93303299153680741, 1e-15);
  EXPECT_THROW(beta(-1, c), std::out_of_range);
  EXPECT_THROW(beta(2001, c), std::out_of_range);
}

TEST(DynamicUncertainty, Examples) {
  const UncertaintyConfig c = defaults(2000);
  EXPECT_EQ(dynamic_uncertainty(positive(0.8), 0.5, 0, c), 0.0);
  EXPECT_DOUBLE_EQ(dynamic_uncertainty(positive(0.8), 0.5, 2000, c),
                   uncertainty(positive(0.8), 0.5));
  const double expected = 1.0 - std::pow(0.4, std::pow(0.5, 0.1));
  EXPECT_NEAR(expected, 0.57468681802857025, 1e-15);
  EXPECT_NEAR(dynamic_uncertainty(positive(0.8), 0.5, 1000, c), expected, 1e-15);
  Assignment neg;
  for (std::int64_t t : {0, 1000, 2000}) EXPECT_EQ(dynamic_uncertainty(neg, 0.3, t, c), 0.0);
}

// Random configurations around the defaults, plus the defaults themselves.
TEST(Oracle, MatchesHighPrecisionReference) {
  prop::Gen g(31);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    UncertaintyConfig c;
    if (i % 4 != 0) {
      c.lower_bound = prop::real(g, 0.2, 0.6);
      c.upper_bound = prop::real(g, c.lower_bound + 0.02, 0.9);
      c.late_upper_bound = prop::real(g, c.lower_bound + 0.02, 0.95);
      c.sharpness = prop::real(g, 1.0, 30.0);
      c.schedule_exponent = prop::real(g, 0.01, 2.0);
      c.total_iterations = prop::integer(g, 1, 100000);
      c.switch_iteration = prop::integer(g, 0, c.total_iterations);
    }
    const std::int64_t t = prop::integer(g, 0, c.total_iterations);
    const double overlap = prop::real(g, 0.0, 1.0);
    const double score = prop::real(g, 0.0, 1.0);

    const oracle::Real hi = oracle::upper_bound(t, c.effective_switch_iteration(), c.upper_bound,
                                                *c.late_upper_bound);
    const oracle::Real in = oracle::normalized_iou(overlap, c.lower_bound, hi, c.sharpness);
    const oracle::Real b = oracle::beta(t, c.total_iterations, c.schedule_exponent);
    const bool pos = overlap > c.lower_bound;
    Assignment a = pos ? positive(score, overlap) : Assignment{};
    a.max_iou = overlap;

    const double got_in = normalized_iou(overlap, c, t);
    worst = std::max(worst, std::abs(got_in - to_double(in)));
    worst = std::max(worst, std::abs(beta(t, c) - to_double(b)));
    if (pos) {
      worst = std::max(worst, std::abs(uncertainty(a, got_in) -
                                       to_double(oracle::uncertainty(score, in))));
      worst = std::max(worst, std::abs(dynamic_uncertainty(a, got_in, t, c) -
                                       to_double(oracle::dynamic_uncertainty(score, in, b))));
    }
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(NormalizedIou, StrictlyIncreasingAndPointSymmetric) {
  EXPECT_TRUE(prop::for_all(10000, 32, [](prop::Gen& g) -> std::optional<std::string> {
    UncertaintyConfig c;
    c.late_upper_bound.reset();
    c.lower_bound = prop::real(g, 0.1, 0.7);
    c.upper_bound = prop::real(g, c.lower_bound + 0.05, 0.95);
    c.sharpness = prop::real(g, 0.5, 15.0);
    const double lo = c.lower_bound, hi = c.upper_bound;
    const double a = prop::real(g, lo, hi), b = prop::real(g, lo, hi);
    if (a == lo || b == lo || a == b) return std::nullopt;
    const double x = std::min(a, b), y = std::max(a, b);
    if (!(normalized_iou(x, c, 0) < normalized_iou(y, c, 0)))
      return prop::describe("not increasing at ", x, " < ", y);
    const double m = 0.5 * (lo + hi);
    const double d = prop::real(g, 0.0, 0.5 * (hi - lo)) * 0.999;
    const double sum = normalized_iou(m + d, c, 0) + normalized_iou(m - d, c, 0);
    if (std::abs(sum - 1.0) > 1e-12) return prop::describe("symmetry defect ", sum - 1.0);
    return std::nullopt;
  }));
}

TEST(NormalizedIou, JumpAtUpperBoundIsTiny) {
  UncertaintyConfig c;
  c.late_upper_bound.reset();
  const double just_below = std::nextafter(c.upper_bound, 0.0);
  const double jump = normalized_iou(c.upper_bound, c, 0) - normalized_iou(just_below, c, 0);
  const double bound = 1.0 - 1.0 / (1.0 + std::exp(-c.sharpness));
  EXPECT_NEAR(bound, 3.059e-7, 1e-10);
  EXPECT_GE(jump, 0.0);
  EXPECT_LE(jump, bound * (1 + 1e-6));
}

TEST(DynamicUncertainty, MonotoneInTimeScoreAndOverlap) {
  EXPECT_TRUE(prop::for_all(10000, 33, [](prop::Gen& g) -> std::optional<std::string> {
    UncertaintyConfig c;
    c.total_iterations = prop::integer(g, 1, 50000);
    c.schedule_exponent = prop::real(g, 0.01, 3.0);
    const double s1 = prop::real(g, 0.0, 1.0), s2 = prop::real(g, s1, 1.0);
    const double n1 = prop::real(g, 1e-6, 1.0), n2 = prop::real(g, n1, 1.0);
    const auto t1 = prop::integer(g, 0, c.total_iterations);
    const auto t2 = prop::integer(g, t1, c.total_iterations);
    const auto u = [&](double s, double n, std::int64_t t) {
      return dynamic_uncertainty(positive(s), n, t, c);
    };
    if (u(s1, n1, t1) > u(s1, n1, t2)) return prop::describe("decreased in t: ", t1, " ", t2);
    if (u(s1, n1, t2) < u(s2, n1, t2)) return prop::describe("increased in s: ", s1, " ", s2);
    if (u(s1, n1, t2) < u(s1, n2, t2)) return prop::describe("increased in I^n: ", n1, " ", n2);
    const double v = u(s1, n1, t1);
    if (!(v >= 0.0 && v <= 1.0)) return prop::describe("out of range ", v);
    if (dynamic_uncertainty(Assignment{}, n1, t1, c) != 0.0) return std::string("negative u");
    return std::nullopt;
  }));
}

TEST(DynamicUncertainty, OverloadUsesTheAssignmentOverlap) {
  const UncertaintyConfig c = defaults(2000);
  const auto a = positive(0.8, 0.55);
  EXPECT_EQ(dynamic_uncertainty(a, 700, c),
            dynamic_uncertainty(a, normalized_iou(0.55, c, 700), 700, c));
}
