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

// 2D scene layouts: static and scripted obstacle boxes, the occupancy grid of
// non-walkable cells, and the signed distance field derived from it.
//
// Cells are addressed (i, j) with i along x and j along y; cell (i, j) has its
// center at origin + ((i + 0.5) h, (j + 0.5) h). A cell is non-walkable iff
// its center lies in a (closed) obstacle box. Everything outside the scene
// bounds is treated as non-walkable.

#ifndef EGONAV_SCENE_HPP_
#define EGONAV_SCENE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "egonav/geometry.hpp"

namespace egonav {

struct Waypoint {
  double t = 0.0;
  Vec2 center = Vec2::Zero();
};

// Piecewise-linear trajectory of an obstacle center. Clamps outside the
// waypoint time range.
struct ObstacleScript {
  std::vector<Waypoint> waypoints;

  Vec2 position_at(double t) const;
};

struct MovingObstacle {
  Vec2 extents = Vec2::Zero();
  ObstacleScript script;
};

struct SceneMap {
  Box2 bounds;
  double cell_size = 0.1;
  std::vector<Box2> static_obstacles;
  std::vector<MovingObstacle> moving_obstacles;
  double walkable_margin = 0.0;

  int nx() const;
  int ny() const;

  // Throws ValidationError naming the offending field or obstacle.
  void validate() const;
};

SceneMap parse_scene(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneMap& scene);
SceneMap load_scene(const std::string& path);

std::vector<Box2> obstacles_at(const SceneMap& scene, double t);
std::vector<Box2> moving_obstacles_at(const SceneMap& scene, double t);

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Vec2& origin, double cell_size, int nx, int ny);

  const Vec2& origin() const { return origin_; }
  double cell_size() const { return cell_size_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  Box2 bounds() const {
    return {origin_, origin_ + Vec2(nx_ * cell_size_, ny_ * cell_size_)};
  }

  bool in_grid(int i, int j) const {
    return i >= 0 && j >= 0 && i < nx_ && j < ny_;
  }
  bool nonwalkable(int i, int j) const { return cells_[index(i, j)] != 0; }
  void set(int i, int j, bool nonwalkable);
  Vec2 cell_center(int i, int j) const {
    return origin_ + Vec2((i + 0.5) * cell_size_, (j + 0.5) * cell_size_);
  }
  // Cell containing p, or (-1, -1)-style out-of-range indices.
  std::pair<int, int> cell_of(const Vec2& p) const;
  int count_nonwalkable() const;

  // Number of non-walkable cells with i in [i0, i1] and j in [j0, j1]
  // (inclusive, already clipped to the grid).
  int count_in_range(int i0, int i1, int j0, int j1) const;

  const std::vector<std::uint8_t>& cells() const { return cells_; }
  bool operator==(const OccupancyGrid& o) const {
    return origin_ == o.origin_ && cell_size_ == o.cell_size_ &&
           nx_ == o.nx_ && ny_ == o.ny_ && cells_ == o.cells_;
  }

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * nx_ + i;
  }
  void rebuild_prefix() const;

  Vec2 origin_ = Vec2::Zero();
  double cell_size_ = 0.1;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::uint8_t> cells_;
  // Summed-area table, (nx+1) x (ny+1), rebuilt lazily after set().
  mutable std::vector<int> prefix_;
  mutable bool prefix_dirty_ = true;
};

// Range of lattice indices k with origin + (k + 0.5) h inside [lo, hi].
// Empty when first > second.
std::pair<int, int> lattice_range(double origin, double h, double lo,
                                  double hi);

OccupancyGrid rasterize_boxes(const Box2& bounds, double cell_size,
                              std::span<const Box2> boxes);
OccupancyGrid rasterize(const SceneMap& scene, double t);

// Non-walkable cell centers inside bbox, where lattice points outside the grid
// count as non-walkable.
int nonwalkable_in_bbox(const OccupancyGrid& grid, const Box2& bbox);
// Same, with additional obstacle boxes that are not rasterized into the grid
// (moving obstacles, other agents).
int nonwalkable_in_bbox(const OccupancyGrid& grid, const Box2& bbox,
                        std::span<const Box2> extra);

struct SdfGrid {
  Vec2 origin = Vec2::Zero();
  double cell_size = 0.1;
  int nx = 0;
  int ny = 0;
  double max_distance = 10.0;
  std::vector<double> values;  // j * nx + i

  double at(int i, int j) const {
    return values[static_cast<std::size_t>(j) * nx + i];
  }
  Box2 bounds() const {
    return {origin, origin + Vec2(nx * cell_size, ny * cell_size)};
  }
};

inline constexpr double kDefaultSdfMax = 10.0;

// Exact Euclidean distance transform between cell centers: walkable cells get
// the distance to the nearest non-walkable center, non-walkable cells minus
// the distance to the nearest walkable center. Clamped to +-max_distance.
SdfGrid build_sdf(const OccupancyGrid& grid,
                  double max_distance = kDefaultSdfMax);

// Bilinear interpolation of the cell-center values. Throws std::out_of_range
// for points outside the grid.
double query_sdf(const SdfGrid& sdf, const Vec2& p);

}  // namespace egonav

#endif  // EGONAV_SCENE_HPP_
