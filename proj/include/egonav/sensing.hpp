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

// Egocentric depth proxy: a fan of 2D rays from the eye midpoint.

#ifndef EGONAV_SENSING_HPP_
#define EGONAV_SENSING_HPP_

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "egonav/body.hpp"
#include "egonav/geometry.hpp"

namespace egonav {

struct SensingConfig {
  int num_rays = 32;
  double fov_min_deg = -90.0;
  double fov_max_deg = 90.0;
  double range = 7.0;

  void validate() const;
  double ray_angle(int i) const;  // radians, relative to the view direction
};

inline constexpr double kInsideObstacleDistance = 1e-3;

// Distance along a unit ray to a closed box, or +inf if missed. Zero when the
// origin is inside the box.
double ray_box_distance(const Vec2& origin, const Vec2& dir, const Box2& box);

// Distance along a unit ray from inside `bounds` to its boundary.
double ray_exit_distance(const Vec2& origin, const Vec2& dir, const Box2& bounds);

// One fan of cfg.num_rays distances in (0, range]. Throws ValidationError if
// the origin lies outside the bounds.
Eigen::VectorXd cast_rays(std::span<const Box2> boxes, const Box2& bounds,
                          const Vec2& origin, const Vec2& view_dir,
                          const SensingConfig& cfg);

// Eye midpoint (x, y) and 2D viewing direction of a frame.
Vec2 eye_midpoint(const MarkerFrame& frame);
Vec2 view_direction_2d(const MarkerFrame& frame);

// T_s x N sensing matrix. Row k is cast from seed frame k against
// `boxes_at(k)`, the obstacles at that frame's timestamp. Origins are clamped
// into the bounds so the sensing stays defined for agents that left the scene.
Eigen::MatrixXd ego_sensing(std::span<const MarkerFrame> seed,
                            const std::function<std::vector<Box2>(int)>& boxes_at,
                            const Box2& bounds, const SensingConfig& cfg);

}  // namespace egonav

#endif  // EGONAV_SENSING_HPP_
