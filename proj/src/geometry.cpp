#include "microforge/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace microforge::geom {

namespace {

std::pair<double, double> project(const Polygon& p, Vec2 axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& v : p.vertices) {
    const double d = dot(v, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + ab * t;
}

double point_polygon_distance(Vec2 p, const Polygon& poly) {
  double best = std::numeric_limits<double>::infinity();
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 c = closest_on_segment(p, v[i], v[(i + 1) % v.size()]);
    best = std::min(best, norm(p - c));
  }
  return best;
}

std::optional<Penetration> circle_circle(const Circle& a, const Circle& b) {
  const Vec2 d = b.center - a.center;
  const double dist = norm(d);
  const double depth = a.radius + b.radius - dist;
  if (depth <= 0.0) return std::nullopt;
  const Vec2 n = dist > 0.0 ? d * (1.0 / dist) : Vec2{1.0, 0.0};
  return Penetration{depth, n};
}

// Normal points from the polygon toward the circle.
std::optional<Penetration> polygon_circle(const Polygon& poly, const Circle& c) {
  const auto& v = poly.vertices;
  if (contains(poly, c.center)) {
    double best = std::numeric_limits<double>::infinity();
    Vec2 best_n;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 e = v[(i + 1) % v.size()] - v[i];
      const Vec2 outward = Vec2{e.y, -e.x} * (1.0 / norm(e));
      const double d = dot(v[i] - c.center, outward);
      if (d < best) {
        best = d;
        best_n = outward;
      }
    }
    return Penetration{best + c.radius, best_n};
  }
  double best = std::numeric_limits<double>::infinity();
  Vec2 closest;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 q = closest_on_segment(c.center, v[i], v[(i + 1) % v.size()]);
    const double d = norm(c.center - q);
    if (d < best) {
      best = d;
      closest = q;
    }
  }
  if (best >= c.radius) return std::nullopt;
  return Penetration{c.radius - best, (c.center - closest) * (1.0 / best)};
}

std::optional<Penetration> polygon_polygon(const Polygon& a, const Polygon& b) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_axis;
  for (const Polygon* p : {&a, &b}) {
    const auto& v = p->vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 e = v[(i + 1) % v.size()] - v[i];
      const Vec2 axis = Vec2{e.y, -e.x} * (1.0 / norm(e));
      const auto [alo, ahi] = project(a, axis);
      const auto [blo, bhi] = project(b, axis);
      const double overlap = std::min(ahi - blo, bhi - alo);
      if (overlap <= 0.0) return std::nullopt;
      if (overlap < best) {
        best = overlap;
        // Orient so that moving b along +axis reduces the overlap.
        best_axis = (ahi - blo) < (bhi - alo) ? axis : -axis;
      }
    }
  }
  return Penetration{best, best_axis};
}

}  // namespace

Pose compose(const Pose& base, const Pose& rel) {
  const Vec2 p = base.to_world({rel.x, rel.y});
  return {p.x, p.y, base.theta + rel.theta};
}

Pose relative(const Pose& base, const Pose& other) {
  const Vec2 p = base.to_local(other.position());
  return {p.x, p.y, other.theta - base.theta};
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

Polygon rectangle(double x_min, double y_min, double x_max, double y_max) {
  return Polygon{{{x_min, y_min}, {x_max, y_min}, {x_max, y_max}, {x_min, y_max}}};
}

bool is_convex_ccw(const Polygon& p) {
  const auto& v = p.vertices;
  if (v.size() < 3) return false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e0 = v[(i + 1) % v.size()] - v[i];
    const Vec2 e1 = v[(i + 2) % v.size()] - v[(i + 1) % v.size()];
    if (cross(e0, e1) <= 0.0) return false;
  }
  return true;
}

ConvexPiece to_world(const ConvexPiece& piece, const Pose& pose) {
  if (const auto* c = std::get_if<Circle>(&piece)) return Circle{pose.to_world(c->center), c->radius};
  const auto& poly = std::get<Polygon>(piece);
  Polygon out;
  out.vertices.reserve(poly.vertices.size());
  for (const auto& v : poly.vertices) out.vertices.push_back(pose.to_world(v));
  return out;
}

std::optional<Penetration> penetration(const ConvexPiece& a, const ConvexPiece& b) {
  const auto* ca = std::get_if<Circle>(&a);
  const auto* cb = std::get_if<Circle>(&b);
  if (ca && cb) return circle_circle(*ca, *cb);
  if (!ca && cb) return polygon_circle(std::get<Polygon>(a), *cb);
  if (ca && !cb) {
    auto p = polygon_circle(std::get<Polygon>(b), *ca);
    if (p) p->normal = -p->normal;
    return p;
  }
  return polygon_polygon(std::get<Polygon>(a), std::get<Polygon>(b));
}

double separation(const ConvexPiece& a, const ConvexPiece& b) {
  if (auto p = penetration(a, b)) return -p->depth;
  const auto* ca = std::get_if<Circle>(&a);
  const auto* cb = std::get_if<Circle>(&b);
  if (ca && cb) return norm(cb->center - ca->center) - ca->radius - cb->radius;
  if (ca) return point_polygon_distance(ca->center, std::get<Polygon>(b)) - ca->radius;
  if (cb) return point_polygon_distance(cb->center, std::get<Polygon>(a)) - cb->radius;
  const auto& pa = std::get<Polygon>(a);
  const auto& pb = std::get<Polygon>(b);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : pa.vertices) best = std::min(best, point_polygon_distance(v, pb));
  for (const auto& v : pb.vertices) best = std::min(best, point_polygon_distance(v, pa));
  return best;
}

bool contains(const Polygon& poly, Vec2 point) {
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (cross(v[(i + 1) % v.size()] - v[i], point - v[i]) < 0.0) return false;
  }
  return true;
}

}  // namespace microforge::geom
