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

#include "egonav/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace egonav {
namespace {

int cells_along(double extent, double h) {
  return static_cast<int>(std::ceil(extent / h - 1e-9));
}

Vec2 parse_vec2(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() ||
      !j[1].is_number()) {
    throw ValidationError(field + ": expected an array of 2 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

double parse_number(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number()) throw ValidationError(field + ": expected a number");
  return j.get<double>();
}

nlohmann::json vec2_json(const Vec2& v) { return {v.x(), v.y()}; }

// 1D squared distance transform (lower envelope of parabolas).
constexpr double kFar = 1e20;

void edt_1d(const std::vector<double>& f, std::vector<double>& d,
            std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -kFar;
  z[1] = kFar;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
               (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
          (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kFar;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared distance (in cells) from every cell to the nearest feature cell.
std::vector<double> squared_edt(const std::vector<bool>& feature, int nx,
                                int ny) {
  std::vector<double> out(static_cast<std::size_t>(nx) * ny, kFar);
  const int n = std::max(nx, ny);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  // Along x.
  f.resize(nx);
  d.resize(nx);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      f[i] = feature[static_cast<std::size_t>(j) * nx + i] ? 0.0 : kFar;
    }
    edt_1d(f, d, v, z);
    for (int i = 0; i < nx; ++i) out[static_cast<std::size_t>(j) * nx + i] = d[i];
  }
  // Along y.
  f.resize(ny);
  d.resize(ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) f[j] = out[static_cast<std::size_t>(j) * nx + i];
    edt_1d(f, d, v, z);
    for (int j = 0; j < ny; ++j) out[static_cast<std::size_t>(j) * nx + i] = d[j];
  }
  return out;
}

}  // namespace

Vec2 ObstacleScript::position_at(double t) const {
  if (waypoints.empty()) return Vec2::Zero();
  if (t <= waypoints.front().t) return waypoints.front().center;
  if (t >= waypoints.back().t) return waypoints.back().center;
  auto it = std::upper_bound(
      waypoints.begin(), waypoints.end(), t,
      [](double value, const Waypoint& w) { return value < w.t; });
  const Waypoint& b = *it;
  const Waypoint& a = *(it - 1);
  const double s = (t - a.t) / (b.t - a.t);
  return a.center + s * (b.center - a.center);
}

int SceneMap::nx() const { return cells_along(bounds.extents().x(), cell_size); }
int SceneMap::ny() const { return cells_along(bounds.extents().y(), cell_size); }

void SceneMap::validate() const {
  const Vec2 ext = bounds.extents();
  if (!(ext.x() > 0.0) || !(ext.y() > 0.0)) {
    throw ValidationError("bounds: xmax must exceed xmin and ymax must exceed ymin");
  }
  if (!(cell_size > 0.0)) throw ValidationError("cell_size: must be positive");
  if (walkable_margin < 0.0) {
    throw ValidationError("walkable_margin: must be non-negative");
  }
  for (std::size_t k = 0; k < static_obstacles.size(); ++k) {
    const Box2& b = static_obstacles[k];
    if (!(b.extents().x() > 0.0) || !(b.extents().y() > 0.0)) {
      throw ValidationError("static[" + std::to_string(k) +
                            "]: extents must be positive");
    }
    if (!b.intersects(bounds)) {
      throw ValidationError("static[" + std::to_string(k) +
                            "]: obstacle lies outside the scene bounds");
    }
  }
  for (std::size_t k = 0; k < moving_obstacles.size(); ++k) {
    const MovingObstacle& m = moving_obstacles[k];
    const std::string name = "moving[" + std::to_string(k) + "]";
    if (!(m.extents.x() > 0.0) || !(m.extents.y() > 0.0)) {
      throw ValidationError(name + ": extents must be positive");
    }
    if (m.script.waypoints.empty()) {
      throw ValidationError(name + ": at least one waypoint is required");
    }
    for (std::size_t w = 0; w < m.script.waypoints.size(); ++w) {
      const Waypoint& wp = m.script.waypoints[w];
      if (w > 0 && !(wp.t > m.script.waypoints[w - 1].t)) {
        throw ValidationError(name + ".waypoints[" + std::to_string(w) +
                              "]: waypoint times must be strictly increasing");
      }
      if (!Box2::from_center(wp.center, m.extents).intersects(bounds)) {
        throw ValidationError(name + ".waypoints[" + std::to_string(w) +
                              "]: obstacle lies outside the scene bounds");
      }
    }
  }
}

SceneMap parse_scene(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("scene: expected a JSON object");
  SceneMap s;
  if (!j.contains("bounds")) throw ValidationError("bounds: missing field");
  const auto& b = j.at("bounds");
  if (!b.is_array() || b.size() != 4) {
    throw ValidationError("bounds: expected [xmin, ymin, xmax, ymax]");
  }
  for (int k = 0; k < 4; ++k) {
    parse_number(b[k], "bounds[" + std::to_string(k) + "]");
  }
  s.bounds = {Vec2(b[0].get<double>(), b[1].get<double>()),
              Vec2(b[2].get<double>(), b[3].get<double>())};
  if (j.contains("cell_size")) s.cell_size = parse_number(j["cell_size"], "cell_size");
  if (j.contains("walkable_margin")) {
    s.walkable_margin = parse_number(j["walkable_margin"], "walkable_margin");
  }
  if (j.contains("static")) {
    const auto& arr = j["static"];
    if (!arr.is_array()) throw ValidationError("static: expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string name = "static[" + std::to_string(k) + "]";
      if (!arr[k].is_object() || !arr[k].contains("center") ||
          !arr[k].contains("extents")) {
        throw ValidationError(name + ": expected {center, extents}");
      }
      s.static_obstacles.push_back(
          Box2::from_center(parse_vec2(arr[k]["center"], name + ".center"),
                            parse_vec2(arr[k]["extents"], name + ".extents")));
    }
  }
  if (j.contains("moving")) {
    const auto& arr = j["moving"];
    if (!arr.is_array()) throw ValidationError("moving: expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string name = "moving[" + std::to_string(k) + "]";
      if (!arr[k].is_object() || !arr[k].contains("extents") ||
          !arr[k].contains("waypoints")) {
        throw ValidationError(name + ": expected {extents, waypoints}");
      }
      MovingObstacle m;
      m.extents = parse_vec2(arr[k]["extents"], name + ".extents");
      const auto& wps = arr[k]["waypoints"];
      if (!wps.is_array()) throw ValidationError(name + ".waypoints: expected an array");
      for (std::size_t w = 0; w < wps.size(); ++w) {
        const std::string wn = name + ".waypoints[" + std::to_string(w) + "]";
        if (!wps[w].is_object() || !wps[w].contains("t") ||
            !wps[w].contains("center")) {
          throw ValidationError(wn + ": expected {t, center}");
        }
        m.script.waypoints.push_back(
            {parse_number(wps[w]["t"], wn + ".t"),
             parse_vec2(wps[w]["center"], wn + ".center")});
      }
      s.moving_obstacles.push_back(std::move(m));
    }
  }
  s.validate();
  return s;
}

nlohmann::json scene_to_json(const SceneMap& s) {
  nlohmann::json j;
  j["bounds"] = {s.bounds.min.x(), s.bounds.min.y(), s.bounds.max.x(),
                 s.bounds.max.y()};
  j["cell_size"] = s.cell_size;
  j["walkable_margin"] = s.walkable_margin;
  j["static"] = nlohmann::json::array();
  for (const Box2& b : s.static_obstacles) {
    j["static"].push_back(
        {{"center", vec2_json(b.center())}, {"extents", vec2_json(b.extents())}});
  }
  j["moving"] = nlohmann::json::array();
  for (const MovingObstacle& m : s.moving_obstacles) {
    nlohmann::json wps = nlohmann::json::array();
    for (const Waypoint& w : m.script.waypoints) {
      wps.push_back({{"t", w.t}, {"center", vec2_json(w.center)}});
    }
    j["moving"].push_back({{"extents", vec2_json(m.extents)}, {"waypoints", wps}});
  }
  return j;
}

SceneMap load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  try {
    return parse_scene(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::vector<Box2> moving_obstacles_at(const SceneMap& scene, double t) {
  std::vector<Box2> out;
  out.reserve(scene.moving_obstacles.size());
  for (const MovingObstacle& m : scene.moving_obstacles) {
    out.push_back(Box2::from_center(m.script.position_at(t), m.extents));
  }
  return out;
}

std::vector<Box2> obstacles_at(const SceneMap& scene, double t) {
  std::vector<Box2> out = scene.static_obstacles;
  for (const Box2& b : moving_obstacles_at(scene, t)) out.push_back(b);
  return out;
}

OccupancyGrid::OccupancyGrid(const Vec2& origin, double cell_size, int nx,
                             int ny)
    : origin_(origin),
      cell_size_(cell_size),
      nx_(nx),
      ny_(ny),
      cells_(static_cast<std::size_t>(nx) * ny, 0) {}

void OccupancyGrid::set(int i, int j, bool nonwalkable) {
  cells_[index(i, j)] = nonwalkable ? 1 : 0;
  prefix_dirty_ = true;
}

std::pair<int, int> OccupancyGrid::cell_of(const Vec2& p) const {
  return {static_cast<int>(std::floor((p.x() - origin_.x()) / cell_size_)),
          static_cast<int>(std::floor((p.y() - origin_.y()) / cell_size_))};
}

int OccupancyGrid::count_nonwalkable() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), 1));
}

void OccupancyGrid::rebuild_prefix() const {
  const int w = nx_ + 1;
  prefix_.assign(static_cast<std::size_t>(w) * (ny_ + 1), 0);
  for (int j = 0; j < ny_; ++j) {
    for (int i = 0; i < nx_; ++i) {
      prefix_[(j + 1) * w + (i + 1)] = cells_[index(i, j)] +
                                       prefix_[j * w + (i + 1)] +
                                       prefix_[(j + 1) * w + i] -
                                       prefix_[j * w + i];
    }
  }
  prefix_dirty_ = false;
}

int OccupancyGrid::count_in_range(int i0, int i1, int j0, int j1) const {
  if (i0 > i1 || j0 > j1) return 0;
  if (prefix_dirty_) rebuild_prefix();
  const int w = nx_ + 1;
  return prefix_[(j1 + 1) * w + (i1 + 1)] - prefix_[j0 * w + (i1 + 1)] -
         prefix_[(j1 + 1) * w + i0] + prefix_[j0 * w + i0];
}

std::pair<int, int> lattice_range(double origin, double h, double lo,
                                  double hi) {
  auto center = [&](int k) { return origin + (k + 0.5) * h; };
  int k0 = static_cast<int>(std::ceil((lo - origin) / h - 0.5));
  while (center(k0) < lo) ++k0;
  while (center(k0 - 1) >= lo) --k0;
  int k1 = static_cast<int>(std::floor((hi - origin) / h - 0.5));
  while (center(k1) > hi) --k1;
  while (center(k1 + 1) <= hi) ++k1;
  return {k0, k1};
}

OccupancyGrid rasterize_boxes(const Box2& bounds, double cell_size,
                              std::span<const Box2> boxes) {
  const int nx = cells_along(bounds.extents().x(), cell_size);
  const int ny = cells_along(bounds.extents().y(), cell_size);
  OccupancyGrid grid(bounds.min, cell_size, nx, ny);
  for (const Box2& b : boxes) {
    auto [i0, i1] = lattice_range(bounds.min.x(), cell_size, b.min.x(), b.max.x());
    auto [j0, j1] = lattice_range(bounds.min.y(), cell_size, b.min.y(), b.max.y());
    i0 = std::max(i0, 0);
    j0 = std::max(j0, 0);
    i1 = std::min(i1, nx - 1);
    j1 = std::min(j1, ny - 1);
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) grid.set(i, j, true);
    }
  }
  return grid;
}

OccupancyGrid rasterize(const SceneMap& scene, double t) {
  std::vector<Box2> boxes = obstacles_at(scene, t);
  if (scene.walkable_margin > 0.0) {
    for (Box2& b : boxes) b = b.inflated(scene.walkable_margin);
  }
  return rasterize_boxes(scene.bounds, scene.cell_size, boxes);
}

int nonwalkable_in_bbox(const OccupancyGrid& grid, const Box2& bbox) {
  const double h = grid.cell_size();
  const auto [i0, i1] = lattice_range(grid.origin().x(), h, bbox.min.x(), bbox.max.x());
  const auto [j0, j1] = lattice_range(grid.origin().y(), h, bbox.min.y(), bbox.max.y());
  if (i0 > i1 || j0 > j1) return 0;
  const long total = static_cast<long>(i1 - i0 + 1) * (j1 - j0 + 1);
  const int ci0 = std::max(i0, 0), ci1 = std::min(i1, grid.nx() - 1);
  const int cj0 = std::max(j0, 0), cj1 = std::min(j1, grid.ny() - 1);
  long inside = 0;
  int blocked = 0;
  if (ci0 <= ci1 && cj0 <= cj1) {
    inside = static_cast<long>(ci1 - ci0 + 1) * (cj1 - cj0 + 1);
    blocked = grid.count_in_range(ci0, ci1, cj0, cj1);
  }
  return static_cast<int>(total - inside) + blocked;
}

int nonwalkable_in_bbox(const OccupancyGrid& grid, const Box2& bbox,
                        std::span<const Box2> extra) {
  if (extra.empty()) return nonwalkable_in_bbox(grid, bbox);
  const double h = grid.cell_size();
  const auto [i0, i1] = lattice_range(grid.origin().x(), h, bbox.min.x(), bbox.max.x());
  const auto [j0, j1] = lattice_range(grid.origin().y(), h, bbox.min.y(), bbox.max.y());
  int count = 0;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      if (!grid.in_grid(i, j) || grid.nonwalkable(i, j)) {
        ++count;
        continue;
      }
      const Vec2 c = grid.cell_center(i, j);
      for (const Box2& b : extra) {
        if (b.contains(c)) {
          ++count;
          break;
        }
      }
    }
  }
  return count;
}

SdfGrid build_sdf(const OccupancyGrid& grid, double max_distance) {
  SdfGrid sdf;
  sdf.origin = grid.origin();
  sdf.cell_size = grid.cell_size();
  sdf.nx = grid.nx();
  sdf.ny = grid.ny();
  sdf.max_distance = max_distance;
  const std::size_t n = static_cast<std::size_t>(sdf.nx) * sdf.ny;
  sdf.values.assign(n, max_distance);

  std::vector<bool> blocked(n), free(n);
  bool any_blocked = false, any_free = false;
  for (int j = 0; j < sdf.ny; ++j) {
    for (int i = 0; i < sdf.nx; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * sdf.nx + i;
      blocked[k] = grid.nonwalkable(i, j);
      free[k] = !blocked[k];
      any_blocked |= blocked[k];
      any_free |= free[k];
    }
  }
  const std::vector<double> to_blocked =
      any_blocked ? squared_edt(blocked, sdf.nx, sdf.ny) : std::vector<double>();
  const std::vector<double> to_free =
      any_free ? squared_edt(free, sdf.nx, sdf.ny) : std::vector<double>();
  for (std::size_t k = 0; k < n; ++k) {
    if (blocked[k]) {
      const double d = any_free ? std::sqrt(to_free[k]) * sdf.cell_size : max_distance;
      sdf.values[k] = -std::min(d, max_distance);
    } else {
      const double d = any_blocked ? std::sqrt(to_blocked[k]) * sdf.cell_size : max_distance;
      sdf.values[k] = std::min(d, max_distance);
    }
  }
  return sdf;
}

double query_sdf(const SdfGrid& sdf, const Vec2& p) {
  const Box2 b = sdf.bounds();
  constexpr double kTol = 1e-9;
  if (!(p.x() >= b.min.x() - kTol && p.x() <= b.max.x() + kTol &&
        p.y() >= b.min.y() - kTol && p.y() <= b.max.y() + kTol)) {
    std::ostringstream msg;
    msg << "query_sdf: point (" << p.x() << ", " << p.y()
        << ") is outside the grid";
    throw std::out_of_range(msg.str());
  }
  double u = (p.x() - sdf.origin.x()) / sdf.cell_size - 0.5;
  double v = (p.y() - sdf.origin.y()) / sdf.cell_size - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(sdf.nx - 1));
  v = std::clamp(v, 0.0, static_cast<double>(sdf.ny - 1));
  const int i0 = std::min(static_cast<int>(std::floor(u)), std::max(sdf.nx - 2, 0));
  const int j0 = std::min(static_cast<int>(std::floor(v)), std::max(sdf.ny - 2, 0));
  const int i1 = std::min(i0 + 1, sdf.nx - 1);
  const int j1 = std::min(j0 + 1, sdf.ny - 1);
  const double fx = u - i0;
  const double fy = v - j0;
  const double v00 = sdf.at(i0, j0), v10 = sdf.at(i1, j0);
  const double v01 = sdf.at(i0, j1), v11 = sdf.at(i1, j1);
  return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

}  // namespace egonav
