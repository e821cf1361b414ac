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

#include "egonav/trajectory.hpp"

#include <bit>
#include <fstream>

#include "egonav/config.hpp"

namespace egonav {
namespace {

using nlohmann::json;

json vec2(const Vec2& v) { return {v.x(), v.y()}; }
Vec2 vec2(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json terms_to_json(const RewardTerms& t) {
  return {{"floor", t.floor}, {"skate", t.skate}, {"dist", t.dist},
          {"ori", t.ori},     {"attention", t.attention}, {"pene", t.pene},
          {"pose", t.pose},   {"succ", t.succ}};
}

RewardTerms terms_from_json(const json& j) {
  RewardTerms t;
  t.floor = j.at("floor").get<double>();
  t.skate = j.at("skate").get<double>();
  t.dist = j.at("dist").get<double>();
  t.ori = j.at("ori").get<double>();
  t.attention = j.at("attention").get<double>();
  t.pene = j.at("pene").get<double>();
  t.pose = j.at("pose").get<double>();
  t.succ = j.at("succ").get<double>();
  return t;
}

bool bits_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool terms_equal(const RewardTerms& a, const RewardTerms& b) {
  return bits_equal(a.floor, b.floor) && bits_equal(a.skate, b.skate) &&
         bits_equal(a.dist, b.dist) && bits_equal(a.ori, b.ori) &&
         bits_equal(a.attention, b.attention) && bits_equal(a.pene, b.pene) &&
         bits_equal(a.pose, b.pose) && bits_equal(a.succ, b.succ);
}

}  // namespace

std::vector<const StepRecord*> Trajectory::agent_steps(int agent) const {
  std::vector<const StepRecord*> out;
  for (const StepRecord& s : steps) {
    if (s.agent == agent) out.push_back(&s);
  }
  return out;
}

Termination Trajectory::final_termination(int agent) const {
  const auto s = agent_steps(agent);
  return s.empty() ? Termination::kRunning : s.back()->termination;
}

Vec2 Trajectory::final_pelvis(int agent) const {
  const auto s = agent_steps(agent);
  if (s.empty()) return agents.at(agent).start;
  return xy(s.back()->frames.back().at(kPelvis));
}

json breakdown_to_json(const RewardBreakdown& b) {
  return {{"raw", terms_to_json(b.raw)},
          {"weighted", terms_to_json(b.weighted)},
          {"total", b.total},
          {"pose_score", b.pose_score},
          {"attention_cos", b.attention_cos},
          {"max_frame_penetration", b.max_frame_penetration},
          {"bbox_cells", b.bbox_cells}};
}

RewardBreakdown breakdown_from_json(const json& j) {
  RewardBreakdown b;
  b.raw = terms_from_json(j.at("raw"));
  b.weighted = terms_from_json(j.at("weighted"));
  b.total = j.at("total").get<double>();
  b.pose_score = j.at("pose_score").get<double>();
  b.attention_cos = j.at("attention_cos").get<double>();
  b.max_frame_penetration = j.at("max_frame_penetration").get<double>();
  b.bbox_cells = j.at("bbox_cells").get<int>();
  return b;
}

json step_to_json(const StepRecord& s) {
  json frames = json::array();
  for (const MarkerFrame& f : s.frames) {
    json p = json::array(), v = json::array();
    for (int m = 0; m < kNumMarkers; ++m) {
      for (int c = 0; c < 3; ++c) {
        p.push_back(f.positions(m, c));
        v.push_back(f.velocities(m, c));
      }
    }
    frames.push_back({{"p", p}, {"v", v}});
  }
  return {{"agent", s.agent},
          {"step", s.step},
          {"time", s.time},
          {"action", std::vector<double>(s.action.data(), s.action.data() + s.action.size())},
          {"frames", frames},
          {"reward", breakdown_to_json(s.reward)},
          {"goal_distance", s.goal_distance},
          {"termination", termination_name(s.termination)}};
}

StepRecord step_from_json(const json& j) {
  StepRecord s;
  s.agent = j.at("agent").get<int>();
  s.step = j.at("step").get<int>();
  s.time = j.at("time").get<double>();
  const auto a = j.at("action").get<std::vector<double>>();
  s.action = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  for (const json& f : j.at("frames")) {
    const auto p = f.at("p").get<std::vector<double>>();
    const auto v = f.at("v").get<std::vector<double>>();
    if (p.size() != kNumMarkers * 3 || v.size() != kNumMarkers * 3) {
      throw ValidationError("frame has the wrong number of values");
    }
    MarkerFrame mf;
    for (int m = 0; m < kNumMarkers; ++m) {
      for (int c = 0; c < 3; ++c) {
        mf.positions(m, c) = p[3 * m + c];
        mf.velocities(m, c) = v[3 * m + c];
      }
    }
    s.frames.push_back(mf);
  }
  s.reward = breakdown_from_json(j.at("reward"));
  s.goal_distance = j.at("goal_distance").get<double>();
  s.termination = termination_from_name(j.at("termination").get<std::string>());
  return s;
}

json trajectory_definition(const Trajectory& t) {
  json agents = json::array();
  for (const AgentSpec& a : t.agents) {
    agents.push_back({{"start", vec2(a.start)},
                      {"heading", a.heading},
                      {"goal", vec2(a.goal)},
                      {"attention_target", vec2(a.attention_target)}});
  }
  return {{"kind", t.kind},
          {"master_seed", t.master_seed},
          {"episode", t.episode},
          {"action_mode", t.mode == ActionMode::kMean ? "mean" : "sample"},
          {"stage", static_cast<int>(t.stage)},
          {"checkpoint_hash", t.checkpoint_hash},
          {"scene", scene_to_json(t.scene)},
          {"env", env_config_to_json(t.env)},
          {"decoder", decoder_config_to_json(t.decoder)},
          {"max_rounds", t.max_rounds},
          {"bbox_margin", t.bbox_margin},
          {"snapshot", t.snapshot},
          {"agents", agents}};
}

std::string trajectory_hash(const Trajectory& t) { return hash_json(trajectory_definition(t)); }

void write_trajectory(const std::string& path, const Trajectory& t) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  json header = trajectory_definition(t);
  header["format"] = "egonav-trajectory";
  header["version"] = 1;
  header["config_hash"] = t.config_hash;
  header["checkpoint"] = t.checkpoint;
  header["scene_ref"] = t.scene_ref;
  out << header.dump() << '\n';
  for (const StepRecord& s : t.steps) out << step_to_json(s).dump() << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open trajectory");
  Trajectory t;
  std::string line;
  int lineno = 0;
  try {
    if (!std::getline(in, line)) throw ValidationError("empty file");
    ++lineno;
    const json h = json::parse(line);
    if (h.value("format", "") != "egonav-trajectory") {
      throw ValidationError("missing trajectory header");
    }
    if (h.at("version").get<int>() != 1) throw ValidationError("unsupported version");
    t.kind = h.at("kind").get<std::string>();
    t.config_hash = h.at("config_hash").get<std::string>();
    t.master_seed = h.at("master_seed").get<std::uint64_t>();
    t.episode = h.at("episode").get<std::int64_t>();
    const std::string mode = h.at("action_mode").get<std::string>();
    if (mode != "mean" && mode != "sample") throw ValidationError("bad action_mode");
    t.mode = mode == "mean" ? ActionMode::kMean : ActionMode::kSample;
    const int stage = h.at("stage").get<int>();
    if (stage != 1 && stage != 2) throw ValidationError("bad stage");
    t.stage = static_cast<Stage>(stage);
    t.checkpoint = h.at("checkpoint").get<std::string>();
    t.checkpoint_hash = h.at("checkpoint_hash").get<std::string>();
    t.scene_ref = h.at("scene_ref").get<std::string>();
    t.scene = parse_scene(h.at("scene"));
    t.env = env_config_from_json(h.at("env"));
    t.decoder = decoder_config_from_json(h.at("decoder"));
    t.max_rounds = h.at("max_rounds").get<int>();
    t.bbox_margin = h.at("bbox_margin").get<double>();
    t.snapshot = h.at("snapshot").get<bool>();
    for (const json& a : h.at("agents")) {
      t.agents.push_back({vec2(a.at("start")), a.at("heading").get<double>(),
                          vec2(a.at("goal")), vec2(a.at("attention_target"))});
    }
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      t.steps.push_back(step_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
  return t;
}

bool same_step(const StepRecord& a, const StepRecord& b, std::string* why) {
  auto fail = [&](const char* what) {
    if (why) *why = what;
    return false;
  };
  if (a.agent != b.agent || a.step != b.step) return fail("index");
  if (!bits_equal(a.time, b.time)) return fail("time");
  if (a.action.size() != b.action.size()) return fail("action");
  for (Eigen::Index i = 0; i < a.action.size(); ++i) {
    if (!bits_equal(a.action[i], b.action[i])) return fail("action");
  }
  if (a.frames.size() != b.frames.size()) return fail("frames");
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    for (int m = 0; m < kNumMarkers; ++m) {
      for (int c = 0; c < 3; ++c) {
        if (!bits_equal(a.frames[k].positions(m, c), b.frames[k].positions(m, c)) ||
            !bits_equal(a.frames[k].velocities(m, c), b.frames[k].velocities(m, c))) {
          return fail("frames");
        }
      }
    }
  }
  if (!terms_equal(a.reward.raw, b.reward.raw) ||
      !terms_equal(a.reward.weighted, b.reward.weighted) ||
      !bits_equal(a.reward.total, b.reward.total) ||
      !bits_equal(a.reward.pose_score, b.reward.pose_score) ||
      !bits_equal(a.reward.attention_cos, b.reward.attention_cos) ||
      !bits_equal(a.reward.max_frame_penetration, b.reward.max_frame_penetration) ||
      a.reward.bbox_cells != b.reward.bbox_cells) {
    return fail("reward");
  }
  if (!bits_equal(a.goal_distance, b.goal_distance)) return fail("goal_distance");
  if (a.termination != b.termination) return fail("termination");
  return true;
}

}  // namespace egonav
