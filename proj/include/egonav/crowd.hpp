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

// Several agents driven by one policy. Agents act one after another within a
// round; each sees the others as bounding boxes.

#ifndef EGONAV_CROWD_HPP_
#define EGONAV_CROWD_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "egonav/env.hpp"
#include "egonav/policy.hpp"
#include "egonav/trajectory.hpp"

namespace egonav {

inline constexpr double kAgentBoxMargin = 0.05;
inline constexpr double kMinStartSeparation = 0.5;

struct CrowdScenario {
  SceneMap scene;
  std::vector<AgentSpec> agents;
  int max_rounds = 24;
  double bbox_margin = kAgentBoxMargin;
  // false: each agent sees the others' latest boxes (running update).
  // true: every agent of a round sees the boxes from the start of the round.
  bool snapshot = false;
  EnvConfig env;  // mode defaults to crowded
  DecoderConfig decoder;

  CrowdScenario() { env.mode = SceneMode::kCrowded; }
  void validate() const;
};

// Bounds of all markers of the seed frames, inflated by `margin`.
Box2 agent_bbox(std::span<const MarkerFrame> seed, double margin = kAgentBoxMargin);

// Called before agent `agent` acts in `round` with the boxes it is given.
using CrowdProbe =
    std::function<void(int round, int agent, std::span<const Box2> others)>;

// Mean actions, stage II rules. The trajectory holds one StepRecord per agent
// and round, in acting order.
Trajectory simulate_crowd(const CrowdScenario& sc, const Policy& policy,
                          const CrowdProbe& probe = {});

// Starts evenly on a circle around the origin, goals antipodal, facing the
// goal. The scene is an empty square with 2 m of room around the circle.
CrowdScenario build_crossing_scenario(int agents, double radius);

// One agent and a box of the given extents that oscillates across the
// midpoint of the start-goal segment, perpendicular to it, over `travel`
// meters with period 2 * travel / speed. Speed 0 gives a static box.
CrowdScenario build_moving_obstacle_scenario(const Vec2& start, const Vec2& goal,
                                             double speed, double travel = 4.0,
                                             double phase = 0.0,
                                             const Vec2& extents = Vec2(1.0, 1.0));

CrowdScenario parse_crowd_scenario(const nlohmann::json& j);
CrowdScenario load_crowd_scenario(const std::string& path);
nlohmann::json crowd_scenario_to_json(const CrowdScenario& sc);

}  // namespace egonav

#endif  // EGONAV_CROWD_HPP_
