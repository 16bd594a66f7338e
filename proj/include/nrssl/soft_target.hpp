#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nrssl/assignment.hpp"

namespace nrssl {

// Probability vector over K foreground classes plus a background slot.
struct SoftTarget {
  std::vector<double> foreground;
  double background = 1.0;

  std::size_t num_classes() const { return foreground.size(); }

  // Flattened (K+1)-slot view; background last.
  std::vector<double> slots() const {
    std::vector<double> out = foreground;
    out.push_back(background);
    return out;
  }

  friend bool operator==(const SoftTarget&, const SoftTarget&) = default;
};

inline SoftTarget hard_target(const Assignment& a, std::size_t num_classes) {
  SoftTarget out{std::vector<double>(num_classes, 0.0), 1.0};
  if (a.is_positive) {
    out.foreground.at(a.assigned_category.slot(num_classes)) = 1.0;
    out.background = 0.0;
  }
  return out;
}

// Moves u(beta) of the assigned foreground mass onto background. Negatives
// always get the pure background target.
inline SoftTarget build_soft_target(const Assignment& a, double u_beta,
                                    std::size_t num_classes) {
  if (!(u_beta >= 0.0 && u_beta <= 1.0))
    throw std::invalid_argument("u_beta must lie in [0, 1]");
  SoftTarget out{std::vector<double>(num_classes, 0.0), 1.0};
  if (!a.is_positive) return out;
  if (!a.assigned_category.valid_for(num_classes) || a.assigned_category.is_background())
    throw std::invalid_argument("positive assignment with invalid category");
  const double certain = 1.0 - u_beta;
  out.foreground[a.assigned_category.slot(num_classes)] = certain;
  out.background = 1.0 - certain;
  return out;
}

}  // namespace nrssl
