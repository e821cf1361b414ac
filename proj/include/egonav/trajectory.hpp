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

// Trajectory records and their JSONL form: one header line, then one line per
// primitive. Numbers are written in shortest round-trip form, so reading a
// file back reproduces every double bit for bit.

#ifndef EGONAV_TRAJECTORY_HPP_
#define EGONAV_TRAJECTORY_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "egonav/body.hpp"
#include "egonav/env.hpp"
#include "egonav/scene.hpp"

namespace egonav {

enum class ActionMode { kMean, kSample };

struct AgentSpec {
  Vec2 start = Vec2::Zero();
  double heading = 0.0;
  Vec2 goal = Vec2::Zero();
  Vec2 attention_target = Vec2::Zero();
};

struct StepRecord {
  int agent = 0;
  int step = 0;
  double time = 0.0;  // obstacle time of the last seed frame before the step
  Eigen::VectorXd action;
  std::vector<MarkerFrame> frames;  // seed + future
  RewardBreakdown reward;
  double goal_distance = 0.0;  // after the step
  Termination termination = Termination::kRunning;
};

struct Trajectory {
  std::string kind = "single";  // or "crowd"
  std::string config_hash;      // over the rollout definition in the header
  std::uint64_t master_seed = 0;
  std::int64_t episode = 0;
  ActionMode mode = ActionMode::kMean;
  Stage stage = Stage::kFinetune;
  std::string checkpoint;       // path as given
  std::string checkpoint_hash;  // of the checkpoint file bytes
  std::string scene_ref;
  SceneMap scene;
  EnvConfig env;
  DecoderConfig decoder;
  int max_rounds = 0;        // crowd only
  double bbox_margin = 0.0;  // crowd only
  bool snapshot = false;     // crowd only
  std::vector<AgentSpec> agents;
  std::vector<StepRecord> steps;

  // Steps of one agent in order.
  std::vector<const StepRecord*> agent_steps(int agent) const;
  // Termination of an agent's last step (kRunning if it never stepped).
  Termination final_termination(int agent) const;
  // Pelvis (x, y) at the end of an agent's last step, or its start.
  Vec2 final_pelvis(int agent) const;
};

// The header fields that define the rollout, without the hash.
nlohmann::json trajectory_definition(const Trajectory& t);
// Recomputes config_hash from the definition.
std::string trajectory_hash(const Trajectory& t);

void write_trajectory(const std::string& path, const Trajectory& t);
// Throws ValidationError naming the line on malformed input.
Trajectory read_trajectory(const std::string& path);

nlohmann::json step_to_json(const StepRecord& s);
StepRecord step_from_json(const nlohmann::json& j);
nlohmann::json breakdown_to_json(const RewardBreakdown& b);
RewardBreakdown breakdown_from_json(const nlohmann::json& j);

// Bitwise equality of two step records; returns false at the first
// difference and names the field in `why`.
bool same_step(const StepRecord& a, const StepRecord& b, std::string* why = nullptr);

}  // namespace egonav

#endif  // EGONAV_TRAJECTORY_HPP_
