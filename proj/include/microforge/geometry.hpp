#pragma once

#include <cmath>
#include <optional>
#include <variant>
#include <vector>

namespace microforge::geom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Planar rigid pose, µm and radians. Body frame: +y is the robot's forward
// (long) axis, +x its width.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  Vec2 to_world(Vec2 local) const { return rotate(local, theta) + position(); }
  Vec2 to_local(Vec2 world) const { return rotate(world - position(), -theta); }
  Vec2 forward() const { return rotate({0.0, 1.0}, theta); }
  bool operator==(const Pose&) const = default;
};

// `base` composed with the relative pose `rel` (rel expressed in base frame).
Pose compose(const Pose& base, const Pose& rel);
// Relative pose of `other` seen from `base`.
Pose relative(const Pose& base, const Pose& other);
double wrap_angle(double a);

struct Circle {
  Vec2 center;  // body frame
  double radius = 0.0;
};

// Convex polygon, counter-clockwise vertices in body frame.
struct Polygon {
  std::vector<Vec2> vertices;
};

using ConvexPiece = std::variant<Circle, Polygon>;

Polygon rectangle(double x_min, double y_min, double x_max, double y_max);
bool is_convex_ccw(const Polygon& p);

// A piece placed in the world.
ConvexPiece to_world(const ConvexPiece& piece, const Pose& pose);

// Penetration of two world-frame pieces: depth > 0 and the unit normal
// pointing from `a` toward `b` (moving b by depth*normal separates them).
struct Penetration {
  double depth = 0.0;
  Vec2 normal;
};
std::optional<Penetration> penetration(const ConvexPiece& a, const ConvexPiece& b);

// Signed separation of two world-frame pieces: > 0 gap, < 0 overlap depth.
double separation(const ConvexPiece& a, const ConvexPiece& b);

bool contains(const Polygon& world_polygon, Vec2 point);

}  // namespace microforge::geom
