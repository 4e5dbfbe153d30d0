#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace planrl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 normalized() const {
    double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{1.0, 0.0};
  }
  Vec2 perp() const { return {-y, x}; }  // 90 deg counterclockwise
  Vec2 rotated(double angle) const {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

/// Rigid 2D transform p -> R(p) + t. The rotation is stored as an explicit
/// matrix so tests can use exact 90-degree rotations.
struct Transform2 {
  double r00 = 1.0, r01 = 0.0, r10 = 0.0, r11 = 1.0;
  Vec2 t;

  static Transform2 identity() { return {}; }
  static Transform2 rotation(double angle, Vec2 trans = {}) {
    Transform2 tf;
    tf.r00 = std::cos(angle);
    tf.r01 = -std::sin(angle);
    tf.r10 = std::sin(angle);
    tf.r11 = std::cos(angle);
    tf.t = trans;
    return tf;
  }
  static Transform2 exact_quarter_turns(int quarters, Vec2 trans = {}) {
    static const int c[4] = {1, 0, -1, 0};
    static const int s[4] = {0, 1, 0, -1};
    int q = ((quarters % 4) + 4) % 4;
    Transform2 tf;
    tf.r00 = c[q]; tf.r01 = -s[q]; tf.r10 = s[q]; tf.r11 = c[q];
    tf.t = trans;
    return tf;
  }

  Vec2 apply(const Vec2& p) const {
    return {r00 * p.x + r01 * p.y + t.x, r10 * p.x + r11 * p.y + t.y};
  }
  double apply_angle(double yaw) const {
    return wrap_angle(yaw + std::atan2(r10, r00));
  }
};

using Polygon = std::vector<Vec2>;  // implicit closing edge last->first

inline double polygon_area(const Polygon& poly) {
  double a = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.cross(q);
  }
  return 0.5 * a;
}

/// Even-odd crossing test. Points exactly on an edge count as inside.
inline bool point_in_polygon(const Polygon& poly, const Vec2& p, double edge_eps = 1e-9) {
  bool inside = false;
  size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[j];
    const Vec2& b = poly[i];
    // on-edge check
    Vec2 ab = b - a, ap = p - a;
    double len2 = ab.squared_norm();
    if (len2 > 0.0) {
      double u = std::clamp(ap.dot(ab) / len2, 0.0, 1.0);
      Vec2 closest = a + ab * u;
      if ((p - closest).squared_norm() <= edge_eps * edge_eps) return true;
    }
    if ((a.y > p.y) != (b.y > p.y)) {
      double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double len2 = ab.squared_norm();
  if (len2 == 0.0) return (p - a).norm();
  double u = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * u)).norm();
}

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    double v = (b - a).cross(c - a);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
  };
  int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  auto on_seg = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return std::min(a.x, b.x) - 1e-12 <= c.x && c.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= c.y && c.y <= std::max(a.y, b.y) + 1e-12;
  };
  if (o1 == 0 && on_seg(p1, p2, q1)) return true;
  if (o2 == 0 && on_seg(p1, p2, q2)) return true;
  if (o3 == 0 && on_seg(q1, q2, p1)) return true;
  if (o4 == 0 && on_seg(q1, q2, p2)) return true;
  return false;
}

/// Oriented bounding box: center, heading and half extents (length, width).
struct Obb {
  Vec2 center;
  double yaw = 0.0;
  double half_length = 1.0;
  double half_width = 0.5;

  std::array<Vec2, 4> corners() const {
    Vec2 fwd{std::cos(yaw), std::sin(yaw)};
    Vec2 left = fwd.perp();
    Vec2 f = fwd * half_length, l = left * half_width;
    return {center + f + l, center + f - l, center - f - l, center - f + l};
  }
};

/// Separating-axis overlap test for two rectangles (4 candidate axes).
inline bool obb_overlap(const Obb& a, const Obb& b) {
  auto ca = a.corners();
  auto cb = b.corners();
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.yaw), std::sin(a.yaw)},
      Vec2{-std::sin(a.yaw), std::cos(a.yaw)},
      Vec2{std::cos(b.yaw), std::sin(b.yaw)},
      Vec2{-std::sin(b.yaw), std::cos(b.yaw)},
  };
  for (const Vec2& ax : axes) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const Vec2& c : ca) {
      double p = c.dot(ax);
      amin = std::min(amin, p);
      amax = std::max(amax, p);
    }
    for (const Vec2& c : cb) {
      double p = c.dot(ax);
      bmin = std::min(bmin, p);
      bmax = std::max(bmax, p);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

inline std::vector<double> cumulative_arclength(const std::vector<Vec2>& pts) {
  std::vector<double> s(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  return s;
}

/// Resample a polyline at fixed arc-length spacing. The first point is kept;
/// subsequent points are placed at exact multiples of `spacing` along the
/// input polyline. Points beyond the input length are not generated.
inline std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, double spacing) {
  assert(pts.size() >= 2 && spacing > 0.0);
  std::vector<double> cum = cumulative_arclength(pts);
  double total = cum.back();
  std::vector<Vec2> out;
  size_t seg = 0;
  for (int k = 0;; ++k) {
    double target = k * spacing;
    if (target > total + 1e-9) break;
    while (seg + 2 < cum.size() && cum[seg + 1] < target) ++seg;
    double seg_len = cum[seg + 1] - cum[seg];
    double u = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    out.push_back(pts[seg] + (pts[seg + 1] - pts[seg]) * u);
  }
  return out;
}

}  // namespace planrl
