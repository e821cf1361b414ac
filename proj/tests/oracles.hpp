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

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code paths it is used to check.

#ifndef EGONAV_TESTS_ORACLES_HPP_
#define EGONAV_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "egonav/geometry.hpp"
#include "egonav/scene.hpp"

namespace egonav::oracle {

struct SdfOracle {
  int nx = 0;
  std::vector<double> values;
  double at(int i, int j) const { return values[j * nx + i]; }
};

// O(n^2) search: for each cell, the nearest cell center of the opposite
// class, signed negative inside obstacles.
inline SdfOracle exhaustive_sdf(const OccupancyGrid& g, double max_distance) {
  SdfOracle o;
  o.nx = g.nx();
  o.values.resize(static_cast<std::size_t>(g.nx()) * g.ny());
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const bool inside = g.nonwalkable(i, j);
      double best = std::numeric_limits<double>::infinity();
      for (int q = 0; q < g.ny(); ++q) {
        for (int p = 0; p < g.nx(); ++p) {
          if (g.nonwalkable(p, q) == inside) continue;
          best = std::min(best, (g.cell_center(p, q) - g.cell_center(i, j)).norm());
        }
      }
      best = std::min(best, max_distance);
      o.values[j * g.nx() + i] = inside ? -best : best;
    }
  }
  return o;
}

// Marches a ray in fixed steps until it enters a closed box, leaves the
// bounds, or exceeds the range.
inline double march_ray(const std::vector<Box2>& boxes, const Box2& bounds,
                        const Vec2& origin, const Vec2& dir, double range,
                        double step = 1e-3) {
  const long n = static_cast<long>(std::ceil(range / step));
  for (long k = 0; k <= n; ++k) {
    const double t = std::min(k * step, range);
    const Vec2 p = origin + t * dir;
    if (!bounds.contains(p)) return t;
    for (const Box2& b : boxes) {
      if (b.contains(p)) return t;
    }
  }
  return range;
}

// Euclidean distance from p to a closed box (0 inside).
inline double point_box_distance(const Vec2& p, const Box2& b) {
  const Vec2 q = p.cwiseMax(b.min).cwiseMin(b.max);
  return (p - q).norm();
}

// march_ray with 1 mm steps, except that a step starting within one step of
// a box is re-marched at step / 1000, so corner chords shorter than a step
// are not skipped.
inline double march_ray_refined(const std::vector<Box2>& boxes, const Box2& bounds,
                                const Vec2& origin, const Vec2& dir, double range,
                                double step = 1e-3) {
  auto blocked = [&](const Vec2& p) {
    if (!bounds.contains(p)) return true;
    for (const Box2& b : boxes) {
      if (b.contains(p)) return true;
    }
    return false;
  };
  const long n = static_cast<long>(std::ceil(range / step));
  for (long k = 0; k <= n; ++k) {
    const double t = std::min(k * step, range);
    const Vec2 p = origin + t * dir;
    if (blocked(p)) return t;
    bool near = false;
    for (const Box2& b : boxes) near = near || point_box_distance(p, b) <= step;
    if (!near || k == n) continue;
    const double fine = step / 1000.0;
    for (int j = 1; j < 1000; ++j) {
      const double u = std::min(t + j * fine, range);
      if (blocked(origin + u * dir)) return u;
    }
  }
  return range;
}

// Central difference of `loss` with respect to params[i].
template <typename Loss>
double central_difference(Eigen::VectorXd& params, Eigen::Index i, Loss&& loss,
                          double eps = 1e-5) {
  const double saved = params[i];
  params[i] = saved + eps;
  const double up = loss();
  params[i] = saved - eps;
  const double down = loss();
  params[i] = saved;
  return (up - down) / (2.0 * eps);
}

// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Generalized advantages by direct summation over the rest of the episode.
inline std::vector<double> brute_force_gae(const std::vector<double>& rewards,
                                           const std::vector<double>& values,
                                           double bootstrap, bool terminal,
                                           double gamma, double lambda) {
  const std::size_t n = rewards.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? values[t + 1] : (terminal ? 0.0 : bootstrap);
    delta[t] = rewards[t] + gamma * next - values[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += std::pow(gamma * lambda, static_cast<double>(k - t)) * delta[k];
    }
  }
  return adv;
}

}  // namespace egonav::oracle

#endif  // EGONAV_TESTS_ORACLES_HPP_
