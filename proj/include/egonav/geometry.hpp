// Copyright 2026 The egonav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EGONAV_GEOMETRY_HPP_
#define EGONAV_GEOMETRY_HPP_

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace egonav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

// Raised for malformed input (files, configs, preconditions on user data).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed axis-aligned rectangle on the floor plane.
struct Box2 {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  static Box2 from_center(const Vec2& center, const Vec2& extents) {
    return {center - 0.5 * extents, center + 0.5 * extents};
  }

  Vec2 center() const { return 0.5 * (min + max); }
  Vec2 extents() const { return max - min; }
  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
           p.y() <= max.y();
  }
  bool intersects(const Box2& o) const {
    return min.x() <= o.max.x() && o.min.x() <= max.x() &&
           min.y() <= o.max.y() && o.min.y() <= max.y();
  }
  Box2 inflated(double margin) const {
    return {(min.array() - margin).matrix(), (max.array() + margin).matrix()};
  }
  Box2 translated(const Vec2& t) const { return {min + t, max + t}; }
};

// Signed distance from p to the boundary of a box; negative inside.
inline double box_signed_distance(const Box2& b, const Vec2& p) {
  const Vec2 c = b.center();
  const Vec2 h = 0.5 * b.extents();
  const Vec2 q = (p - c).cwiseAbs() - h;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(std::max(q.x(), q.y()), 0.0);
  return outside + inside;
}

inline Vec2 rotate2(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

// Planar rigid motion acting on (x, y) and leaving z untouched:
// p -> R(angle) p + translation.
struct Rigid2 {
  double angle = 0.0;
  Vec2 translation = Vec2::Zero();

  Vec2 apply(const Vec2& p) const { return rotate2(p, angle) + translation; }
  Vec3 apply(const Vec3& p) const {
    const Vec2 q = apply(Vec2(p.x(), p.y()));
    return {q.x(), q.y(), p.z()};
  }
  Vec2 rotate(const Vec2& v) const { return rotate2(v, angle); }
  Vec3 rotate(const Vec3& v) const {
    const Vec2 q = rotate2(Vec2(v.x(), v.y()), angle);
    return {q.x(), q.y(), v.z()};
  }
  Rigid2 inverse() const {
    return {-angle, -rotate2(translation, -angle)};
  }
  // (this * other)(p) = this(other(p))
  Rigid2 compose(const Rigid2& other) const {
    return {angle + other.angle, apply(other.translation)};
  }
};

inline Vec2 xy(const Vec3& p) { return {p.x(), p.y()}; }

}  // namespace egonav

#endif  // EGONAV_GEOMETRY_HPP_
