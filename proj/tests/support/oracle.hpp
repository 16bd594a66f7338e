#pragma once

// Reference formulas in 50-digit binary floating point, written directly from
// the definitions and sharing no code with the library.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <vector>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

inline Real normalized_iou(Real overlap, Real lo, Real hi, Real sharpness) {
  if (overlap <= lo || overlap >= hi) return Real(1);
  const Real mid = (lo + hi) / 2;
  const Real half = (hi - lo) / 2;
  const Real mapped = (overlap - mid) / half;
  return Real(1) / (Real(1) + exp(-sharpness * mapped));
}

inline Real upper_bound(long long t, long long switch_at, Real early, Real late) {
  return t >= switch_at ? late : early;
}

inline Real uncertainty(Real score, Real normalized) { return Real(1) - score * normalized; }

inline Real beta(long long t, long long total, Real exponent) {
  if (t == 0) return Real(0);
  return pow(Real(t) / Real(total), exponent);
}

inline Real dynamic_uncertainty(Real score, Real normalized, Real b) {
  const Real certainty = score * normalized;
  if (b == 0) return Real(0);
  return Real(1) - pow(certainty, b);
}

// One-hot on `assigned` for positives, then mass u moved to background.
inline std::vector<Real> soft_target(bool positive, int assigned, int classes, Real u) {
  std::vector<Real> y(static_cast<std::size_t>(classes) + 1, Real(0));
  if (!positive) {
    y.back() = 1;
    return y;
  }
  y[static_cast<std::size_t>(assigned)] = Real(1) - u;
  y.back() = u;
  return y;
}

}  // namespace oracle
