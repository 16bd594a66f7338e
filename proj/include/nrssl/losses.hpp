#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "nrssl/geometry.hpp"
#include "nrssl/soft_target.hpp"

namespace nrssl {

// Neumaier-compensated running sum. Batch losses are reduced through this so
// that the summation order does not leak into results.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }
  CompensatedSum& operator+=(const CompensatedSum& other) {
    add(other.sum_);
    add(other.compensation_);
    return *this;
  }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax of empty logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double log_norm = peak + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> sigmoid(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(),
                 [](double z) { return sigmoid(z); });
  return out;
}

namespace detail {

inline void check_sizes(std::size_t target, std::size_t other) {
  if (target != other) throw std::invalid_argument("target/prediction size mismatch");
}

}  // namespace detail

// KL(target || probs), with 0 * ln 0 = 0.
inline double kl_soft_ce(std::span<const double> target, std::span<const double> probs) {
  detail::check_sizes(target.size(), probs.size());
  CompensatedSum acc;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] <= 0.0) continue;
    if (!(probs[k] > 0.0))
      throw std::domain_error("KL divergence is infinite: zero probability on target mass");
    acc.add(target[k] * std::log(target[k] / probs[k]));
  }
  return std::max(0.0, acc.value());
}

inline double kl_soft_ce(const SoftTarget& target, std::span<const double> probs) {
  const auto slots = target.slots();
  return kl_soft_ce(slots, probs);
}

// KL(target || softmax(logits)) evaluated through log-softmax.
inline double kl_from_logits(std::span<const double> target, std::span<const double> logits) {
  detail::check_sizes(target.size(), logits.size());
  const auto log_probs = log_softmax(logits);
  CompensatedSum acc;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] <= 0.0) continue;
    acc.add(target[k] * (std::log(target[k]) - log_probs[k]));
  }
  return acc.value();
}

// d KL / d logits = softmax(z) * sum(target) - target.
inline std::vector<double> kl_from_logits_grad(std::span<const double> target,
                                               std::span<const double> logits) {
  detail::check_sizes(target.size(), logits.size());
  const auto probs = softmax(logits);
  const double mass = std::accumulate(target.begin(), target.end(), 0.0);
  std::vector<double> grad(logits.size());
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = probs[k] * mass - target[k];
  return grad;
}

// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before any log.
inline constexpr double kProbEpsilon = 1e-7;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

// Soft-target focal loss over independent per-class probabilities:
//   -sum_k [ y_k (1-p_k)^g ln p_k + (1-y_k) p_k^g ln(1-p_k) ]
inline double soft_focal(std::span<const double> target, std::span<const double> probs,
                         double gamma) {
  detail::check_sizes(target.size(), probs.size());
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal gamma must be >= 0");
  CompensatedSum acc;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double p = clamp_probability(probs[k]);
    const double y = target[k];
    acc.add(-(y * std::pow(1.0 - p, gamma) * std::log(p) +
              (1.0 - y) * std::pow(p, gamma) * std::log1p(-p)));
  }
  return acc.value();
}

inline double soft_focal(const SoftTarget& target, std::span<const double> probs,
                         double gamma) {
  const auto slots = target.slots();
  return soft_focal(slots, probs, gamma);
}

// Soft binary cross-entropy summed over classes.
inline double soft_bce(std::span<const double> target, std::span<const double> probs) {
  detail::check_sizes(target.size(), probs.size());
  CompensatedSum acc;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double p = clamp_probability(probs[k]);
    acc.add(-(target[k] * std::log(p) + (1.0 - target[k]) * std::log1p(-p)));
  }
  return acc.value();
}

inline double soft_focal_from_logits(std::span<const double> target,
                                     std::span<const double> logits, double gamma) {
  const auto probs = sigmoid(logits);
  return soft_focal(target, probs, gamma);
}

// Gradient of soft_focal(target, sigmoid(z)) with respect to z. Zero where the
// probability clamp is active.
inline std::vector<double> soft_focal_from_logits_grad(std::span<const double> target,
                                                       std::span<const double> logits,
                                                       double gamma) {
  detail::check_sizes(target.size(), logits.size());
  std::vector<double> grad(logits.size(), 0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double p = sigmoid(logits[k]);
    if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) continue;
    const double q = 1.0 - p;
    const double y = target[k];
    const double pos = gamma * std::pow(q, gamma) * p * std::log(p) - std::pow(q, gamma + 1.0);
    const double neg = -gamma * std::pow(p, gamma) * q * std::log1p(-p) + std::pow(p, gamma + 1.0);
    grad[k] = y * pos + (1.0 - y) * neg;
  }
  return grad;
}

inline double l1_distance(const BoxDelta& a, const BoxDelta& b) {
  return std::abs(a.dx - b.dx) + std::abs(a.dy - b.dy) + std::abs(a.dw - b.dw) +
         std::abs(a.dh - b.dh);
}

// (1 - u) * L1(pred, target).
inline double weighted_l1(const BoxDelta& pred, const BoxDelta& target, double u_beta) {
  if (!(u_beta >= 0.0 && u_beta <= 1.0))
    throw std::invalid_argument("u_beta must lie in [0, 1]");
  return (1.0 - u_beta) * l1_distance(pred, target);
}

// Subgradient with respect to pred (sign, 0 at ties).
inline BoxDelta weighted_l1_grad(const BoxDelta& pred, const BoxDelta& target, double u_beta) {
  const double w = 1.0 - u_beta;
  auto sgn = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
  return {w * sgn(pred.dx - target.dx), w * sgn(pred.dy - target.dy),
          w * sgn(pred.dw - target.dw), w * sgn(pred.dh - target.dh)};
}

// Central-difference gradient.
template <typename Loss>
std::vector<double> numeric_gradient(Loss&& loss, std::span<const double> point, double step) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = loss(std::span<const double>(x));
    x[i] = saved - step;
    const double down = loss(std::span<const double>(x));
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Worst per-component |analytic - numeric| / max(|analytic|, |numeric|, floor).
// The floor keeps near-zero components from reporting rounding noise as error.
template <typename Loss, typename Gradient>
double grad_check(Loss&& loss, Gradient&& gradient, std::span<const double> point,
                  double step, double floor = 1e-3) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check step must be > 0");
  const std::vector<double> analytic = gradient(point);
  const std::vector<double> numeric = numeric_gradient(loss, point, step);
  if (analytic.size() != numeric.size())
    throw std::invalid_argument("gradient size does not match point size");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace nrssl
