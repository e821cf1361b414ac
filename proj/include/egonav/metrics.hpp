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

// Evaluation metrics over trajectories, and deterministic replay. Every
// metric reads only what a trajectory file stores.

#ifndef EGONAV_METRICS_HPP_
#define EGONAV_METRICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "egonav/crowd.hpp"
#include "egonav/trajectory.hpp"

namespace egonav {

inline constexpr double kSuccessThreshold = 0.3;
inline constexpr double kContactHeight = 0.05;
inline constexpr double kContactSpeed = 0.075;
inline constexpr int kDiversitySamples = 50;
inline constexpr int kHumanSamplePoints = 200;

// Pelvis-goal distance (x, y) at the end of an agent's last step.
double final_goal_distance(const Trajectory& t, int agent = 0);

// Over every agent of every trajectory. Percent, strict < threshold.
double success_rate(std::span<const Trajectory> ts, double threshold = kSuccessThreshold);
// Mean final pelvis-goal distance over every agent of every trajectory.
double final_distance(std::span<const Trajectory> ts);

// exp(-(|min z| - 0.05)+) * exp(-(min |v| - 0.075)+) over foot markers.
double contact_score(const MarkerFrame& f);
// Mean contact_score over the generated frames of every agent.
double contact_metric(const Trajectory& t);

// Percent of generated frames in which any marker (x, y) lies in a scene
// obstacle (closed box) at that frame's time.
double pene_scene(const Trajectory& t);

// Vertical capsules: torso pelvis to head top, legs mid-hip to the floor.
struct Capsule {
  Vec2 axis = Vec2::Zero();
  double z0 = 0.0, z1 = 0.0, radius = 0.0;
  bool contains(const Vec3& p) const;
};
std::vector<Capsule> body_capsules(const MarkerFrame& f, const CapsuleDims& dims = {});
// Sample points of `other` inside the capsules of `self`.
int points_inside(const MarkerFrame& self, const MarkerFrame& other,
                  int sample_points = kHumanSamplePoints);
// Episode sum over generated frames and ordered agent pairs. Agents that
// stopped keep their final frame. Throws ValidationError for one agent.
double pene_human(const Trajectory& t, int sample_points = kHumanSamplePoints);

// Pelvis (x, y) path of an agent: first seed frame, then generated frames.
std::vector<Vec2> pelvis_path(const Trajectory& t, int agent = 0);
// Paths resampled to 50 points by normalized time; at each index the
// population std of positions across rollouts, sqrt(var_x + var_y); mean
// over indices. Throws ValidationError for K < 2 or unequal start/goal.
double path_diversity(std::span<const Trajectory> ts);
double path_diversity(const std::vector<std::vector<Vec2>>& paths);
// The per-index spread that path_diversity averages.
std::vector<double> path_spread(const std::vector<std::vector<Vec2>>& paths);

struct MetricsReport {
  double success_rate = 0.0;   // percent
  double final_distance = 0.0; // m
  double contact = 0.0;
  double pene_scene = 0.0;     // percent
  std::optional<double> pene_human;
  std::optional<double> diversity;
  int episodes = 0;
};
MetricsReport compute_metrics(std::span<const Trajectory> ts);
nlohmann::json metrics_to_json(const MetricsReport& m);

// ---- replay ------------------------------------------------------------------

struct ReplayResult {
  bool match = false;
  int steps_compared = 0;
  int first_divergent_step = -1;  // index into Trajectory::steps
  std::string detail;
  Trajectory regenerated;
};

// Re-executes a trajectory read from disk. Throws ValidationError when the
// header hash does not match its definition, when the checkpoint is missing
// or when its bytes changed.
ReplayResult replay(const Trajectory& t, const std::string& traj_path = "");
ReplayResult replay_file(const std::string& path);

// Regenerates a single-agent episode as evaluate() would.
Trajectory rollout_single(const Policy& policy, const Trajectory& header);

// Scenario recorded in a crowd trajectory.
CrowdScenario scenario_of(const Trajectory& t);

}  // namespace egonav

#endif  // EGONAV_METRICS_HPP_
