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

#include "egonav/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace egonav {

void SensingConfig::validate() const {
  if (num_rays < 2) throw ValidationError("sensing.num_rays: must be >= 2");
  if (!(fov_min_deg < fov_max_deg)) {
    throw ValidationError("sensing.fov: min must be below max");
  }
  if (!(range > 0.0)) throw ValidationError("sensing.range: must be positive");
}

double SensingConfig::ray_angle(int i) const {
  const double lo = fov_min_deg * kPi / 180.0;
  const double hi = fov_max_deg * kPi / 180.0;
  return lo + i * (hi - lo) / (num_rays - 1);
}

double ray_box_distance(const Vec2& origin, const Vec2& dir, const Box2& box) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    const double o = origin[axis];
    const double d = dir[axis];
    const double lo = box.min[axis];
    const double hi = box.max[axis];
    if (d == 0.0) {
      if (o < lo || o > hi) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (lo - o) / d;
    double t1 = (hi - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_far < 0.0) return std::numeric_limits<double>::infinity();
  return std::max(t_near, 0.0);
}

double ray_exit_distance(const Vec2& origin, const Vec2& dir, const Box2& bounds) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    const double d = dir[axis];
    if (d > 0.0) {
      t_exit = std::min(t_exit, (bounds.max[axis] - origin[axis]) / d);
    } else if (d < 0.0) {
      t_exit = std::min(t_exit, (bounds.min[axis] - origin[axis]) / d);
    }
  }
  return std::max(t_exit, 0.0);
}

Eigen::VectorXd cast_rays(std::span<const Box2> boxes, const Box2& bounds,
                          const Vec2& origin, const Vec2& view_dir,
                          const SensingConfig& cfg) {
  if (!bounds.contains(origin)) {
    throw ValidationError("cast_rays: ray origin lies outside the scene bounds");
  }
  Eigen::VectorXd out(cfg.num_rays);
  for (int i = 0; i < cfg.num_rays; ++i) {
    const Vec2 dir = rotate2(view_dir, cfg.ray_angle(i));
    double t = std::min(cfg.range, ray_exit_distance(origin, dir, bounds));
    for (const Box2& b : boxes) t = std::min(t, ray_box_distance(origin, dir, b));
    out[i] = std::max(t, kInsideObstacleDistance);
  }
  return out;
}

Vec2 eye_midpoint(const MarkerFrame& frame) {
  return 0.5 * (xy(frame.at(kEyeLeft)) + xy(frame.at(kEyeRight)));
}

Vec2 view_direction_2d(const MarkerFrame& frame) {
  const Vec3 v = derive_view(frame, 0.0);
  return Vec2(v.x(), v.y()).normalized();
}

Eigen::MatrixXd ego_sensing(std::span<const MarkerFrame> seed,
                            const std::function<std::vector<Box2>(int)>& boxes_at,
                            const Box2& bounds, const SensingConfig& cfg) {
  Eigen::MatrixXd e(seed.size(), cfg.num_rays);
  for (std::size_t k = 0; k < seed.size(); ++k) {
    Vec2 origin = eye_midpoint(seed[k]);
    origin = origin.cwiseMax(bounds.min).cwiseMin(bounds.max);
    const std::vector<Box2> boxes = boxes_at(static_cast<int>(k));
    e.row(k) = cast_rays(boxes, bounds, origin, view_direction_2d(seed[k]), cfg)
                   .transpose();
  }
  return e;
}

}  // namespace egonav
