#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "nrssl/assignment.hpp"

namespace nrssl {

// Hyperparameters of the region uncertainty. Defaults: lower bound 0.5, upper
// bound 0.7 raised to 0.8 at the switch iteration, sharpness 15, schedule
// exponent 0.1.
struct UncertaintyConfig {
  double lower_bound = 0.5;
  double upper_bound = 0.7;
  double sharpness = 15.0;
  double schedule_exponent = 0.1;
  std::int64_t total_iterations = 2000;
  std::optional<double> late_upper_bound = 0.8;
  // Defaults to 2/3 of total_iterations when unset.
  std::optional<std::int64_t> switch_iteration;

  std::int64_t effective_switch_iteration() const {
    return switch_iteration.value_or(2 * total_iterations / 3);
  }

  void validate() const {
    if (!(lower_bound > 0.0 && lower_bound < upper_bound && upper_bound < 1.0))
      throw std::invalid_argument("uncertainty: require 0 < lower_bound < upper_bound < 1");
    if (!(sharpness > 0.0)) throw std::invalid_argument("uncertainty: sharpness must be > 0");
    if (!(schedule_exponent > 0.0))
      throw std::invalid_argument("uncertainty: schedule_exponent must be > 0");
    if (total_iterations < 1)
      throw std::invalid_argument("uncertainty: total_iterations must be >= 1");
    if (late_upper_bound) {
      if (!(*late_upper_bound > lower_bound && *late_upper_bound < 1.0))
        throw std::invalid_argument(
            "uncertainty: require lower_bound < late_upper_bound < 1");
      const auto sw = effective_switch_iteration();
      if (sw < 0 || sw > total_iterations)
        throw std::invalid_argument(
            "uncertainty: switch_iteration must lie in [0, total_iterations]");
    }
  }
};

inline double upper_bound_at(const UncertaintyConfig& cfg, std::int64_t t) {
  if (cfg.late_upper_bound && t >= cfg.effective_switch_iteration())
    return *cfg.late_upper_bound;
  return cfg.upper_bound;
}

// Sigmoid-normalized overlap. Inside the open interval (lower, upper) the
// overlap is mapped linearly onto [-1, 1] and squashed; everywhere else the
// value is 1.
inline double normalized_iou(double overlap, const UncertaintyConfig& cfg, std::int64_t t) {
  const double lo = cfg.lower_bound;
  const double hi = upper_bound_at(cfg, t);
  if (!(overlap > lo && overlap < hi)) return 1.0;
  const double centered = (2.0 * overlap - lo - hi) / (hi - lo);
  return 1.0 / (1.0 + std::exp(-cfg.sharpness * centered));
}

namespace detail {

inline double matched_score_or_throw(const Assignment& a) {
  if (!a.matched_score)
    throw std::invalid_argument("positive assignment without a matched score");
  const double s = *a.matched_score;
  if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("matched score outside [0, 1]");
  return s;
}

inline void check_normalized(double normalized) {
  if (!(normalized > 0.0 && normalized <= 1.0))
    throw std::invalid_argument("normalized overlap must lie in (0, 1]");
}

}  // namespace detail

// 1 - s * I^n for positives, 0 for negatives.
inline double uncertainty(const Assignment& a, double normalized) {
  if (!a.is_positive) return 0.0;
  const double s = detail::matched_score_or_throw(a);
  detail::check_normalized(normalized);
  return 1.0 - s * normalized;
}

// (t / T)^q.
inline double beta(std::int64_t t, const UncertaintyConfig& cfg) {
  if (t < 0 || t > cfg.total_iterations)
    throw std::out_of_range("iteration outside [0, total_iterations]");
  const double ratio = static_cast<double>(t) / static_cast<double>(cfg.total_iterations);
  return std::pow(ratio, cfg.schedule_exponent);
}

// 1 - (s * I^n)^beta(t) for positives, 0 for negatives.
inline double dynamic_uncertainty(const Assignment& a, double normalized, std::int64_t t,
                                  const UncertaintyConfig& cfg) {
  if (!a.is_positive) return 0.0;
  const double s = detail::matched_score_or_throw(a);
  detail::check_normalized(normalized);
  return 1.0 - std::pow(s * normalized, beta(t, cfg));
}

// Convenience: normalized overlap from the assignment itself, then u(beta).
inline double dynamic_uncertainty(const Assignment& a, std::int64_t t,
                                  const UncertaintyConfig& cfg) {
  if (!a.is_positive) return 0.0;
  return dynamic_uncertainty(a, normalized_iou(a.max_iou, cfg, t), t, cfg);
}

}  // namespace nrssl
