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

// Shared fixtures and independent oracles for the unit tests.

#ifndef EGONAV_TESTS_TEST_UTIL_HPP_
#define EGONAV_TESTS_TEST_UTIL_HPP_

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "egonav/env.hpp"
#include "egonav/rng.hpp"
#include "egonav/scene.hpp"

namespace egonav {

class TempFile {
 public:
  explicit TempFile(const std::string& contents, const std::string& suffix = ".json") {
    static std::atomic<int> counter{0};
    path_ = (std::filesystem::temp_directory_path() /
             ("egonav_test_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++) + suffix))
                .string();
    std::ofstream(path_) << contents;
  }
  ~TempFile() { std::filesystem::remove(path_); }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline SceneMap random_scene(Rng& rng, int n_static, bool with_moving = false) {
  SceneMap s;
  s.bounds = {Vec2(0, 0), Vec2(8, 8)};
  for (int k = 0; k < n_static; ++k) {
    const Vec2 c(uniform(rng, 0.5, 7.5), uniform(rng, 0.5, 7.5));
    s.static_obstacles.push_back(
        Box2::from_center(c, Vec2(uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0))));
  }
  if (with_moving) {
    MovingObstacle m;
    m.extents = Vec2(uniform(rng, 0.3, 1.0), uniform(rng, 0.3, 1.0));
    m.script.waypoints = {{0.0, Vec2(uniform(rng, 1, 7), uniform(rng, 1, 7))},
                          {2.0, Vec2(uniform(rng, 1, 7), uniform(rng, 1, 7))}};
    s.moving_obstacles.push_back(m);
  }
  return s;
}

inline OccupancyGrid random_grid(Rng& rng, int nx, int ny, double density) {
  OccupancyGrid g(Vec2(0, 0), 0.1, nx, ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) g.set(i, j, uniform(rng, 0, 1) < density);
  }
  return g;
}

// States reached by short random walks in a random box scene.
inline std::vector<EnvState> random_states(Rng& rng, int count, const EnvConfig& cfg = {}) {
  std::vector<EnvState> out;
  while (static_cast<int>(out.size()) < count) {
    const Env env(std::make_shared<SceneContext>(random_scene(rng, 2)),
                  std::make_shared<PrimitiveDecoder>(), cfg);
    EnvState s;
    try {
      s = env.reset(Vec2(uniform(rng, 0.2, 7.8), uniform(rng, 0.2, 7.8)),
                    uniform(rng, -kPi, kPi),
                    Vec2(uniform(rng, 0.2, 7.8), uniform(rng, 0.2, 7.8)));
    } catch (const ValidationError&) {
      continue;
    }
    const int steps = static_cast<int>(uniform(rng, 0, 4));
    for (int k = 0; k < steps && s.termination == Termination::kRunning; ++k) {
      Eigen::VectorXd a(16);
      for (int i = 0; i < 16; ++i) a[i] = standard_normal(rng);
      s = env.step(s, a, Stage::kPretrain).state;
    }
    if (s.termination == Termination::kRunning) out.push_back(s);
  }
  return out;
}

}  // namespace egonav

#endif  // EGONAV_TESTS_TEST_UTIL_HPP_
