#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "nrssl/geometry.hpp"
#include "support/property.hpp"

using nrssl::BBox;

namespace {

BBox random_box(prop::Gen& g, double extent = 100.0) {
  const double x1 = prop::real(g, -extent, extent);
  const double y1 = prop::real(g, -extent, extent);
  return {x1, y1, x1 + prop::real(g, 0.01, extent), y1 + prop::real(g, 0.01, extent)};
}

// Boxes that overlap often enough to exercise the intersection branch.
BBox nearby_box(prop::Gen& g, const BBox& b) {
  const double w = b.width(), h = b.height();
  const double x1 = b.x1() + prop::real(g, -w, w);
  const double y1 = b.y1() + prop::real(g, -h, h);
  return {x1, y1, x1 + w * prop::real(g, 0.2, 2.0), y1 + h * prop::real(g, 0.2, 2.0)};
}

}  // namespace

TEST(Geometry, RejectsDegenerateBoxes) {
  EXPECT_THROW(BBox(0, 0, 0, 1), std::invalid_argument);
  EXPECT_THROW(BBox(0, 0, 1, 0), std::invalid_argument);
  EXPECT_THROW(BBox(2, 0, 1, 1), std::invalid_argument);
  EXPECT_THROW(BBox(0, 0, std::nan(""), 1), std::invalid_argument);
}

TEST(Geometry, Area) {
  EXPECT_DOUBLE_EQ(area(BBox(0, 0, 1, 1)), 1.0);
  EXPECT_DOUBLE_EQ(area(BBox(0, 0, 2, 3)), 6.0);
  EXPECT_DOUBLE_EQ(area(BBox(5, 5, 6, 6)), 1.0);
}

TEST(Geometry, IouExamples) {
  const BBox a(0, 0, 2, 2);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, BBox(3, 3, 4, 4)), 0.0);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(iou(a, BBox(2, 0, 4, 2)), 0.0);
  EXPECT_NEAR(iou(a, BBox(1, 1, 3, 3)), 1.0 / 7.0, 1e-15);
}

TEST(Geometry, IouIsSymmetricAndBounded) {
  EXPECT_TRUE(prop::for_all(20000, 11, [](prop::Gen& g) -> std::optional<std::string> {
    const BBox a = random_box(g);
    const BBox b = nearby_box(g, a);
    const double ab = iou(a, b), ba = iou(b, a);
    if (ab != ba) return prop::describe("asymmetric ", ab, " vs ", ba);
    if (!(ab >= 0.0 && ab <= 1.0)) return prop::describe("out of range ", ab);
    if (iou(a, a) != 1.0) return prop::describe("self iou ", iou(a, a));
    return std::nullopt;
  }));
}

TEST(Geometry, IouInvariantUnderJointTranslationAndScaling) {
  EXPECT_TRUE(prop::for_all(20000, 12, [](prop::Gen& g) -> std::optional<std::string> {
    const BBox a = random_box(g);
    const BBox b = nearby_box(g, a);
    const double base = iou(a, b);
    const double dx = prop::real(g, -500, 500), dy = prop::real(g, -500, 500);
    const double f = prop::real(g, 0.01, 100.0);
    const double moved = iou(a.translated(dx, dy), b.translated(dx, dy));
    const double scaled = iou(a.scaled(f), b.scaled(f));
    auto close = [&](double v) { return std::abs(v - base) <= 1e-12 * std::max(1.0, base); };
    if (!close(moved)) return prop::describe("translation ", base, " -> ", moved);
    if (!close(scaled)) return prop::describe("scaling ", base, " -> ", scaled);
    return std::nullopt;
  }));
}

TEST(Geometry, IntersectionNeverExceedsEitherArea) {
  EXPECT_TRUE(prop::for_all(10000, 13, [](prop::Gen& g) -> std::optional<std::string> {
    const BBox a = random_box(g);
    const BBox b = nearby_box(g, a);
    const double inter = intersection_area(a, b);
    if (inter > area(a) * (1 + 1e-12) || inter > area(b) * (1 + 1e-12))
      return prop::describe("intersection ", inter);
    return std::nullopt;
  }));
}

TEST(Geometry, EncodeDeltaRoundTrip) {
  const BBox from(10, 20, 30, 60);
  const BBox to(12, 18, 34, 58);
  const auto d = encode_delta(from, to);
  const double cx = from.center_x() + d.dx * from.width();
  const double cy = from.center_y() + d.dy * from.height();
  const double w = from.width() * std::exp(d.dw);
  const double h = from.height() * std::exp(d.dh);
  EXPECT_NEAR(cx - w / 2, to.x1(), 1e-12);
  EXPECT_NEAR(cy - h / 2, to.y1(), 1e-12);
  EXPECT_NEAR(cx + w / 2, to.x2(), 1e-12);
  EXPECT_NEAR(cy + h / 2, to.y2(), 1e-12);
  EXPECT_EQ(encode_delta(from, from), nrssl::BoxDelta{});
}
