#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace hidyna {

// Thrown when an input violates a documented precondition; the CLI maps it
// to exit code 1, anything else to 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(const Vec3& a, double s) {
  return {a[0] * s, a[1] * s, a[2] * s};
}

inline double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm2(const Vec2& a) { return std::sqrt(dot(a, a)); }

/// Rigid camera-to-world transform: position plus unit quaternion (w, x, y, z).
struct Pose {
  Vec3 position{0.0, 0.0, 0.0};
  std::array<double, 4> orientation{1.0, 0.0, 0.0, 0.0};

  bool unit_quaternion(double tol = 1e-6) const {
    const auto& q = orientation;
    double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    return std::abs(n - 1.0) <= tol;
  }

  Vec3 rotate(const Vec3& v) const {
    // q * (0, v) * q^-1 expanded.
    const double w = orientation[0], x = orientation[1], y = orientation[2], z = orientation[3];
    const double tx = 2.0 * (y * v[2] - z * v[1]);
    const double ty = 2.0 * (z * v[0] - x * v[2]);
    const double tz = 2.0 * (x * v[1] - y * v[0]);
    return {v[0] + w * tx + (y * tz - z * ty),
            v[1] + w * ty + (z * tx - x * tz),
            v[2] + w * tz + (x * ty - y * tx)};
  }

  Vec3 apply(const Vec3& v) const { return rotate(v) + position; }

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Axis-aligned box, min_corner <= max_corner componentwise.
struct Box3 {
  Vec3 min_corner{0.0, 0.0, 0.0};
  Vec3 max_corner{0.0, 0.0, 0.0};

  bool valid() const {
    for (int i = 0; i < 3; ++i)
      if (min_corner[i] > max_corner[i]) return false;
    return true;
  }

  Vec3 center() const {
    return {(min_corner[0] + max_corner[0]) * 0.5,
            (min_corner[1] + max_corner[1]) * 0.5,
            (min_corner[2] + max_corner[2]) * 0.5};
  }

  static Box3 from_center_extent(const Vec3& c, const Vec3& ext) {
    return {{c[0] - ext[0] * 0.5, c[1] - ext[1] * 0.5, c[2] - ext[2] * 0.5},
            {c[0] + ext[0] * 0.5, c[1] + ext[1] * 0.5, c[2] + ext[2] * 0.5}};
  }

  /// Componentwise min/max union envelope.
  Box3 envelope(const Box3& o) const {
    Box3 r;
    for (int i = 0; i < 3; ++i) {
      r.min_corner[i] = std::min(min_corner[i], o.min_corner[i]);
      r.max_corner[i] = std::max(max_corner[i], o.max_corner[i]);
    }
    return r;
  }

  friend bool operator==(const Box3&, const Box3&) = default;
};

inline double box_volume(const Box3& a) {
  if (!a.valid()) throw ValidationError("box_volume: invalid box (min > max)");
  return (a.max_corner[0] - a.min_corner[0]) * (a.max_corner[1] - a.min_corner[1]) *
         (a.max_corner[2] - a.min_corner[2]);
}

inline double box_intersection_volume(const Box3& a, const Box3& b) {
  double v = 1.0;
  for (int i = 0; i < 3; ++i) {
    double lo = std::max(a.min_corner[i], b.min_corner[i]);
    double hi = std::min(a.max_corner[i], b.max_corner[i]);
    if (hi <= lo) return 0.0;
    v *= hi - lo;
  }
  return v;
}

enum class OverlapMetric { MinVolume, IoU };

/// Overlap ratio in [0,1]. Default metric divides the intersection volume by
/// the smaller box volume so a small instance coinciding with a larger static
/// vertex still scores near 1; IoU is available behind the metric flag.
/// A degenerate zero-volume operand yields 0 and sets *degenerate when given.
inline double box_overlap_ratio(const Box3& a, const Box3& b,
                                OverlapMetric metric = OverlapMetric::MinVolume,
                                bool* degenerate = nullptr) {
  if (!a.valid() || !b.valid())
    throw ValidationError("box_overlap_ratio: invalid box (min > max)");
  if (degenerate) *degenerate = false;
  const double va = box_volume(a), vb = box_volume(b);
  if (va <= 0.0 || vb <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const double inter = box_intersection_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double den = metric == OverlapMetric::MinVolume ? std::min(va, vb) : va + vb - inter;
  return inter / den;
}

// ---- 2D polygon helpers (region footprints, doorway segments) ----

using Polygon2 = std::vector<Vec2>;

inline bool point_in_polygon(const Vec2& p, const Polygon2& poly) {
  // Crossing-number test; boundary points count as inside.
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[j];
    const Vec2& b = poly[i];
    // On-segment check.
    double cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (std::abs(cross) < 1e-12 && p[0] >= std::min(a[0], b[0]) - 1e-12 &&
        p[0] <= std::max(a[0], b[0]) + 1e-12 && p[1] >= std::min(a[1], b[1]) - 1e-12 &&
        p[1] <= std::max(a[1], b[1]) + 1e-12)
      return true;
    if ((b[1] > p[1]) != (a[1] > p[1])) {
      double xint = (a[0] - b[0]) * (p[1] - b[1]) / (a[1] - b[1]) + b[0];
      if (p[0] < xint) inside = !inside;
    }
  }
  return inside;
}

inline Vec2 polygon_centroid(const Polygon2& poly) {
  // Area-weighted centroid; falls back to vertex mean for degenerate area.
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    double w = poly[j][0] * poly[i][1] - poly[i][0] * poly[j][1];
    a2 += w;
    cx += (poly[j][0] + poly[i][0]) * w;
    cy += (poly[j][1] + poly[i][1]) * w;
  }
  if (std::abs(a2) < 1e-12) {
    Vec2 m{0.0, 0.0};
    for (const auto& p : poly) {
      m[0] += p[0];
      m[1] += p[1];
    }
    return {m[0] / double(n), m[1] / double(n)};
  }
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab{b[0] - a[0], b[1] - a[1]};
  Vec2 ap{p[0] - a[0], p[1] - a[1]};
  double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? std::clamp(dot(ap, ab) / len2, 0.0, 1.0) : 0.0;
  Vec2 proj{a[0] + t * ab[0], a[1] + t * ab[1]};
  return norm2({p[0] - proj[0], p[1] - proj[1]});
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    double v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    if (std::abs(v) < 1e-12) return 0;
    return v > 0 ? 1 : -1;
  };
  int o1 = orient(a, b, c), o2 = orient(a, b, d);
  int o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  auto on = [&](const Vec2& p, const Vec2& q, const Vec2& r) {
    return orient(p, q, r) == 0 && r[0] >= std::min(p[0], q[0]) - 1e-12 &&
           r[0] <= std::max(p[0], q[0]) + 1e-12 && r[1] >= std::min(p[1], q[1]) - 1e-12 &&
           r[1] <= std::max(p[1], q[1]) + 1e-12;
  };
  return on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b);
}

inline double segment_segment_distance(const Vec2& a, const Vec2& b, const Vec2& c,
                                        const Vec2& d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min(std::min(point_segment_distance(a, c, d), point_segment_distance(b, c, d)),
                  std::min(point_segment_distance(c, a, b), point_segment_distance(d, a, b)));
}

/// Distance from a segment to a polygon footprint; 0 if either endpoint lies inside.
inline double segment_polygon_distance(const Vec2& a, const Vec2& b, const Polygon2& poly) {
  if (point_in_polygon(a, poly) || point_in_polygon(b, poly)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++)
    best = std::min(best, segment_segment_distance(a, b, poly[j], poly[i]));
  return best;
}

/// Simple = no two non-adjacent edges intersect.
inline bool polygon_is_simple(const Polygon2& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Skip adjacent edges (they share an endpoint).
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

}  // namespace hidyna
