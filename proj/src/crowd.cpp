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

#include "egonav/crowd.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "egonav/config.hpp"

namespace egonav {
namespace {

using nlohmann::json;

Vec2 vec2_from(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(ctx + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

double heading_to(const Vec2& from, const Vec2& to) {
  const Vec2 d = to - from;
  return std::atan2(d.y(), d.x());
}

}  // namespace

void CrowdScenario::validate() const {
  scene.validate();
  env.validate();
  if (agents.empty()) throw ValidationError("scenario: at least one agent is required");
  if (max_rounds < 1) throw ValidationError("scenario.max_rounds: must be >= 1");
  if (bbox_margin < 0) throw ValidationError("scenario.bbox_margin: must be >= 0");
  const SceneContext ctx(scene);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string tag = "scenario.agents[" + std::to_string(i) + "]";
    if (!ctx.walkable(agents[i].start, 0.0)) throw ValidationError(tag + ": start not walkable");
    if (!ctx.walkable(agents[i].goal, 0.0)) throw ValidationError(tag + ": goal not walkable");
    for (std::size_t j = 0; j < i; ++j) {
      if ((agents[i].start - agents[j].start).norm() < kMinStartSeparation) {
        throw ValidationError(tag + ": start closer than 0.5 m to agent " + std::to_string(j));
      }
    }
  }
}

Box2 agent_bbox(std::span<const MarkerFrame> seed, double margin) {
  return marker_bbox(seed).inflated(margin);
}

Trajectory simulate_crowd(const CrowdScenario& sc, const Policy& policy,
                          const CrowdProbe& probe) {
  sc.validate();
  if (policy.config().latent_dim != sc.decoder.latent_dim) {
    throw ValidationError("policy latent_dim does not match the decoder");
  }
  const Env env(std::make_shared<const SceneContext>(sc.scene),
                std::make_shared<const PrimitiveDecoder>(sc.decoder), sc.env);
  const int C = static_cast<int>(sc.agents.size());

  Trajectory traj;
  traj.kind = "crowd";
  traj.mode = ActionMode::kMean;
  traj.stage = Stage::kFinetune;
  traj.scene = sc.scene;
  traj.env = sc.env;
  traj.decoder = sc.decoder;
  traj.max_rounds = sc.max_rounds;
  traj.bbox_margin = sc.bbox_margin;
  traj.snapshot = sc.snapshot;
  traj.agents = sc.agents;

  std::vector<EnvState> states(C);
  for (int c = 0; c < C; ++c) {
    const AgentSpec& a = sc.agents[c];
    try {
      states[c] = env.reset(a.start, a.heading, a.goal, a.attention_target);
    } catch (const ValidationError& e) {
      throw ValidationError("agent " + std::to_string(c) + ": " + e.what());
    }
  }
  std::vector<Box2> boxes(C);
  for (int c = 0; c < C; ++c) boxes[c] = agent_bbox(states[c].seed, sc.bbox_margin);

  for (int round = 0; round < sc.max_rounds; ++round) {
    bool any = false;
    const std::vector<Box2> round_start = boxes;
    for (int c = 0; c < C; ++c) {
      EnvState& s = states[c];
      if (s.termination != Termination::kRunning) continue;
      any = true;
      std::vector<Box2> others;
      for (int o = 0; o < C; ++o) {
        if (o != c) others.push_back(sc.snapshot ? round_start[o] : boxes[o]);
      }
      if (probe) probe(round, c, others);
      env.observe(s, others);
      const PolicyOutput out = policy.forward(make_observation(s, sc.env));
      const Eigen::VectorXd a = out.mu.col(0);
      StepResult r;
      try {
        r = env.step(s, a, Stage::kFinetune, others);
      } catch (const std::exception& e) {
        throw std::runtime_error("agent " + std::to_string(c) + ": " + e.what());
      }
      StepRecord rec;
      rec.agent = c;
      rec.step = round;
      rec.time = s.time;
      rec.action = a;
      rec.frames = std::move(r.primitive.frames);
      rec.reward = r.reward;
      rec.goal_distance = r.state.goal_distance;
      rec.termination = r.state.termination;
      traj.steps.push_back(std::move(rec));
      s = std::move(r.state);
      boxes[c] = agent_bbox(s.seed, sc.bbox_margin);
    }
    if (!any) break;
  }
  traj.config_hash = trajectory_hash(traj);
  return traj;
}

CrowdScenario build_crossing_scenario(int agents, double radius) {
  if (agents < 2) throw ValidationError("crossing: need at least 2 agents");
  if (!(radius > 1.0)) throw ValidationError("crossing: radius must exceed 1 m");
  CrowdScenario sc;
  const double half = radius + 2.0;
  sc.scene.bounds = {Vec2(-half, -half), Vec2(half, half)};
  for (int i = 0; i < agents; ++i) {
    const double ang = 2.0 * kPi * i / agents;
    AgentSpec a;
    a.start = radius * Vec2(std::cos(ang), std::sin(ang));
    a.goal = -a.start;
    a.heading = heading_to(a.start, a.goal);
    a.attention_target = a.goal;
    sc.agents.push_back(a);
  }
  return sc;
}

CrowdScenario build_moving_obstacle_scenario(const Vec2& start, const Vec2& goal,
                                             double speed, double travel, double phase,
                                             const Vec2& extents) {
  const Vec2 seg = goal - start;
  if (seg.norm() < 1e-9) throw ValidationError("moving obstacle: start equals goal");
  if (speed < 0) throw ValidationError("moving obstacle: speed must be >= 0");
  if (!(travel > 0)) throw ValidationError("moving obstacle: travel must be positive");
  CrowdScenario sc;
  sc.env.mode = SceneMode::kSparse;
  const Vec2 mid = 0.5 * (start + goal);
  const Vec2 perp = Vec2(-seg.y(), seg.x()).normalized();
  const double pad = 0.5 * travel + extents.maxCoeff() + 1.0;
  sc.scene.bounds = {start.cwiseMin(goal) - Vec2(pad, pad), start.cwiseMax(goal) + Vec2(pad, pad)};
  if (speed == 0.0) {
    sc.scene.static_obstacles.push_back(Box2::from_center(mid, extents));
  } else {
    // Triangle wave over [-travel/2, travel/2]; phase in [0, 1) of a period.
    const double period = 2.0 * travel / speed;
    const double horizon = (sc.max_rounds + 2) * kFutureFrames * kFrameDt;
    MovingObstacle m;
    m.extents = extents;
    const double t0 = -phase * period;
    for (int k = 0; t0 + 0.5 * period * (k - 1) <= horizon; ++k) {
      const double t = t0 + 0.5 * period * k;
      const double side = k % 2 == 0 ? -0.5 : 0.5;
      m.script.waypoints.push_back({t, mid + side * travel * perp});
    }
    sc.scene.moving_obstacles.push_back(m);
  }
  AgentSpec a;
  a.start = start;
  a.goal = goal;
  a.heading = heading_to(start, goal);
  a.attention_target = goal;
  sc.agents.push_back(a);
  return sc;
}

CrowdScenario parse_crowd_scenario(const json& j) {
  if (!j.is_object()) throw ValidationError("scenario: expected an object");
  CrowdScenario sc;
  json scene = j;
  for (const char* k : {"agents", "max_rounds", "bbox_margin", "snapshot", "env", "decoder"}) {
    scene.erase(k);
  }
  sc.scene = parse_scene(scene);
  if (j.contains("env")) sc.env = env_config_from_json(j.at("env"));
  if (j.contains("decoder")) sc.decoder = decoder_config_from_json(j.at("decoder"));
  try {
    if (j.contains("max_rounds")) sc.max_rounds = j.at("max_rounds").get<int>();
    if (j.contains("bbox_margin")) sc.bbox_margin = j.at("bbox_margin").get<double>();
    if (j.contains("snapshot")) sc.snapshot = j.at("snapshot").get<bool>();
  } catch (const json::exception&) {
    throw ValidationError("scenario: max_rounds, bbox_margin or snapshot has the wrong type");
  }
  if (!j.contains("agents") || !j.at("agents").is_array()) {
    throw ValidationError("scenario.agents: expected an array");
  }
  int i = 0;
  for (const json& a : j.at("agents")) {
    const std::string tag = "scenario.agents[" + std::to_string(i++) + "]";
    if (!a.is_object()) throw ValidationError(tag + ": expected an object");
    for (const auto& item : a.items()) {
      const std::string& k = item.key();
      if (k != "start" && k != "goal" && k != "heading" && k != "attention_target") {
        throw ValidationError(tag + ": unknown key '" + k + "'");
      }
    }
    if (!a.contains("start") || !a.contains("goal")) {
      throw ValidationError(tag + ": start and goal are required");
    }
    AgentSpec s;
    s.start = vec2_from(a.at("start"), tag + ".start");
    s.goal = vec2_from(a.at("goal"), tag + ".goal");
    s.heading = heading_to(s.start, s.goal);
    if (a.contains("heading")) {
      if (!a.at("heading").is_number()) throw ValidationError(tag + ".heading: expected a number");
      s.heading = a.at("heading").get<double>();
    }
    s.attention_target =
        a.contains("attention_target") ? vec2_from(a.at("attention_target"), tag + ".attention_target")
                                       : s.goal;
    sc.agents.push_back(s);
  }
  sc.validate();
  return sc;
}

CrowdScenario load_crowd_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open scenario");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  try {
    return parse_crowd_scenario(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

json crowd_scenario_to_json(const CrowdScenario& sc) {
  json j = scene_to_json(sc.scene);
  json agents = json::array();
  for (const AgentSpec& a : sc.agents) {
    agents.push_back({{"start", {a.start.x(), a.start.y()}},
                      {"goal", {a.goal.x(), a.goal.y()}},
                      {"heading", a.heading},
                      {"attention_target", {a.attention_target.x(), a.attention_target.y()}}});
  }
  j["agents"] = agents;
  j["max_rounds"] = sc.max_rounds;
  j["bbox_margin"] = sc.bbox_margin;
  j["snapshot"] = sc.snapshot;
  j["env"] = env_config_to_json(sc.env);
  j["decoder"] = decoder_config_to_json(sc.decoder);
  return j;
}

}  // namespace egonav
