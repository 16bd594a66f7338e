#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nrssl {

// Axis-aligned box, corner-encoded (x1, y1, x2, y2) with real coordinates.
// No +1 pixel convention. Zero-area boxes cannot be constructed.
class BBox {
 public:
  BBox(double x1, double y1, double x2, double y2)
      : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!(x1 < x2) || !(y1 < y2)) {
      throw std::invalid_argument(
          "BBox requires x1 < x2 and y1 < y2, got (" + std::to_string(x1) +
          ", " + std::to_string(y1) + ", " + std::to_string(x2) + ", " +
          std::to_string(y2) + ")");
    }
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }

  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }

  BBox translated(double dx, double dy) const {
    return {x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy};
  }

  // Uniform scaling about the origin.
  BBox scaled(double factor) const {
    return {x1_ * factor, y1_ * factor, x2_ * factor, y2_ * factor};
  }

  bool within(double width, double height) const {
    return x1_ >= 0.0 && y1_ >= 0.0 && x2_ <= width && y2_ <= height;
  }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x1_;
  double y1_;
  double x2_;
  double y2_;
};

inline double area(const BBox& b) { return b.width() * b.height(); }

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = area(a) + area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Center-offset / log-size regression parameterization.
struct BoxDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;

  friend bool operator==(const BoxDelta&, const BoxDelta&) = default;
};

// Deltas that move `from` onto `to`.
inline BoxDelta encode_delta(const BBox& from, const BBox& to) {
  return {(to.center_x() - from.center_x()) / from.width(),
          (to.center_y() - from.center_y()) / from.height(),
          std::log(to.width() / from.width()),
          std::log(to.height() / from.height())};
}

}  // namespace nrssl
