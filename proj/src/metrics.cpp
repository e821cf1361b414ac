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

#include "egonav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "egonav/checkpoint.hpp"
#include "egonav/config.hpp"

namespace egonav {
namespace {

// Generated frames of a step record: everything after the seed.
std::span<const MarkerFrame> generated(const StepRecord& s) {
  return std::span<const MarkerFrame>(s.frames).subspan(
      std::min<std::size_t>(kSeedFrames, s.frames.size()));
}

double frame_time(const StepRecord& s, std::size_t k) {
  return s.time + (static_cast<double>(k) - (kSeedFrames - 1)) * kFrameDt;
}

void require_nonempty(std::span<const Trajectory> ts, const char* what) {
  if (ts.empty()) throw ValidationError(std::string(what) + ": no trajectories");
}

std::vector<Vec2> resample(const std::vector<Vec2>& path, int n) {
  std::vector<Vec2> out(n);
  const double last = static_cast<double>(path.size() - 1);
  for (int i = 0; i < n; ++i) {
    const double u = n == 1 ? 0.0 : last * i / (n - 1);
    const auto k = static_cast<std::size_t>(std::floor(u));
    if (k + 1 >= path.size()) {
      out[i] = path.back();
    } else {
      const double s = u - static_cast<double>(k);
      out[i] = (1.0 - s) * path[k] + s * path[k + 1];
    }
  }
  return out;
}

}  // namespace

double final_goal_distance(const Trajectory& t, int agent) {
  return (t.final_pelvis(agent) - t.agents.at(agent).goal).norm();
}

double success_rate(std::span<const Trajectory> ts, double threshold) {
  require_nonempty(ts, "success_rate");
  int n = 0, ok = 0;
  for (const Trajectory& t : ts) {
    for (std::size_t a = 0; a < t.agents.size(); ++a, ++n) {
      if (final_goal_distance(t, static_cast<int>(a)) < threshold) ++ok;
    }
  }
  return 100.0 * ok / n;
}

double final_distance(std::span<const Trajectory> ts) {
  require_nonempty(ts, "final_distance");
  double sum = 0.0;
  int n = 0;
  for (const Trajectory& t : ts) {
    for (std::size_t a = 0; a < t.agents.size(); ++a, ++n) {
      sum += final_goal_distance(t, static_cast<int>(a));
    }
  }
  return sum / n;
}

double contact_score(const MarkerFrame& f) {
  double min_z = std::numeric_limits<double>::infinity();
  double min_v = min_z;
  for (int m : kFootMarkers) {
    min_z = std::min(min_z, f.at(m).z());
    min_v = std::min(min_v, f.vel(m).norm());
  }
  return std::exp(-std::max(0.0, std::abs(min_z) - kContactHeight)) *
         std::exp(-std::max(0.0, min_v - kContactSpeed));
}

double contact_metric(const Trajectory& t) {
  double sum = 0.0;
  int n = 0;
  for (const StepRecord& s : t.steps) {
    for (const MarkerFrame& f : generated(s)) {
      sum += contact_score(f);
      ++n;
    }
  }
  return n == 0 ? 1.0 : sum / n;
}

double pene_scene(const Trajectory& t) {
  int n = 0, hit = 0;
  for (const StepRecord& s : t.steps) {
    const auto gen = generated(s);
    for (std::size_t k = 0; k < gen.size(); ++k) {
      const std::vector<Box2> boxes = obstacles_at(t.scene, frame_time(s, k + kSeedFrames));
      ++n;
      bool inside = false;
      for (int m = 0; m < kNumMarkers && !inside; ++m) {
        const Vec2 p = xy(gen[k].at(m));
        for (const Box2& b : boxes) {
          if (b.contains(p)) {
            inside = true;
            break;
          }
        }
      }
      if (inside) ++hit;
    }
  }
  return n == 0 ? 0.0 : 100.0 * hit / n;
}

bool Capsule::contains(const Vec3& p) const {
  const double lo = std::min(z0, z1), hi = std::max(z0, z1);
  const double dz = p.z() < lo ? lo - p.z() : (p.z() > hi ? p.z() - hi : 0.0);
  const double dxy = (xy(p) - axis).norm();
  return dxy * dxy + dz * dz < radius * radius;
}

std::vector<Capsule> body_capsules(const MarkerFrame& f, const CapsuleDims& dims) {
  const Vec3 pelvis = f.at(kPelvis);
  const Vec3 hips = 0.5 * (f.at(kHipLeft) + f.at(kHipRight));
  return {{xy(pelvis), pelvis.z(), f.at(kHeadTop).z(), dims.torso_radius},
          {xy(hips), hips.z(), 0.0, dims.leg_radius}};
}

int points_inside(const MarkerFrame& self, const MarkerFrame& other, int sample_points) {
  const auto caps = body_capsules(self);
  int n = 0;
  for (const Vec3& p : body_sample_points(other, sample_points)) {
    for (const Capsule& c : caps) {
      if (c.contains(p)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

double pene_human(const Trajectory& t, int sample_points) {
  const int C = static_cast<int>(t.agents.size());
  if (C < 2) throw ValidationError("pene_human: needs at least 2 agents");
  std::vector<std::vector<const StepRecord*>> steps(C);
  int rounds = 0;
  for (int c = 0; c < C; ++c) {
    steps[c] = t.agent_steps(c);
    rounds = std::max(rounds, static_cast<int>(steps[c].size()));
  }
  // Pose of agent c at round r, generated frame k; agents that stopped (or
  // never moved) hold their last frame.
  auto pose = [&](int c, int r, int k) -> const MarkerFrame* {
    if (steps[c].empty()) return nullptr;
    if (r < static_cast<int>(steps[c].size())) return &generated(*steps[c][r])[k];
    return &steps[c].back()->frames.back();
  };
  double total = 0.0;
  for (int r = 0; r < rounds; ++r) {
    for (int k = 0; k < kFutureFrames; ++k) {
      for (int a = 0; a < C; ++a) {
        const MarkerFrame* fa = pose(a, r, k);
        if (!fa) continue;
        for (int b = 0; b < C; ++b) {
          if (b == a) continue;
          const MarkerFrame* fb = pose(b, r, k);
          if (fb) total += points_inside(*fa, *fb, sample_points);
        }
      }
    }
  }
  return total;
}

std::vector<Vec2> pelvis_path(const Trajectory& t, int agent) {
  std::vector<Vec2> out;
  for (const StepRecord* s : t.agent_steps(agent)) {
    if (out.empty()) out.push_back(xy(s->frames.front().at(kPelvis)));
    for (const MarkerFrame& f : generated(*s)) out.push_back(xy(f.at(kPelvis)));
  }
  if (out.empty()) out.push_back(t.agents.at(agent).start);
  return out;
}

std::vector<double> path_spread(const std::vector<std::vector<Vec2>>& paths) {
  const int K = static_cast<int>(paths.size());
  if (K < 2) throw ValidationError("path_diversity: needs at least 2 rollouts");
  std::vector<std::vector<Vec2>> rs;
  for (const auto& p : paths) {
    if (p.empty()) throw ValidationError("path_diversity: empty path");
    rs.push_back(resample(p, kDiversitySamples));
  }
  std::vector<double> out(kDiversitySamples);
  for (int i = 0; i < kDiversitySamples; ++i) {
    const Vec2 origin = rs[0][i];
    Vec2 mean = Vec2::Zero();
    for (const auto& r : rs) mean += (r[i] - origin) / K;
    double var = 0.0;
    for (const auto& r : rs) var += (r[i] - origin - mean).squaredNorm() / K;
    out[i] = std::sqrt(var);
  }
  return out;
}

double path_diversity(const std::vector<std::vector<Vec2>>& paths) {
  const std::vector<double> s = path_spread(paths);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

double path_diversity(std::span<const Trajectory> ts) {
  if (ts.size() < 2) throw ValidationError("path_diversity: needs at least 2 rollouts");
  std::vector<std::vector<Vec2>> paths;
  for (const Trajectory& t : ts) {
    if (t.agents.empty()) throw ValidationError("path_diversity: trajectory without agents");
    if (t.agents[0].start != ts[0].agents[0].start || t.agents[0].goal != ts[0].agents[0].goal) {
      throw ValidationError("path_diversity: rollouts must share start and goal");
    }
    paths.push_back(pelvis_path(t, 0));
  }
  return path_diversity(paths);
}

MetricsReport compute_metrics(std::span<const Trajectory> ts) {
  require_nonempty(ts, "compute_metrics");
  MetricsReport m;
  m.episodes = static_cast<int>(ts.size());
  m.success_rate = success_rate(ts);
  m.final_distance = final_distance(ts);
  double contact = 0.0, pene = 0.0, human = 0.0;
  bool crowd = true;
  for (const Trajectory& t : ts) {
    contact += contact_metric(t) / m.episodes;
    pene += pene_scene(t) / m.episodes;
    if (t.agents.size() >= 2) {
      human += pene_human(t);
    } else {
      crowd = false;
    }
  }
  m.contact = contact;
  m.pene_scene = pene;
  if (crowd) m.pene_human = human / m.episodes;
  bool same = ts.size() >= 2;
  for (const Trajectory& t : ts) {
    same = same && t.agents.size() == 1 && t.agents[0].start == ts[0].agents[0].start &&
           t.agents[0].goal == ts[0].agents[0].goal;
  }
  if (same) m.diversity = path_diversity(ts);
  return m;
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j = {{"episodes", m.episodes},
                      {"sr", m.success_rate},
                      {"dist", m.final_distance},
                      {"contact", m.contact},
                      {"pene_s", m.pene_scene}};
  j["pene_h"] = m.pene_human ? nlohmann::json(*m.pene_human) : nlohmann::json(nullptr);
  j["diversity"] = m.diversity ? nlohmann::json(*m.diversity) : nlohmann::json(nullptr);
  return j;
}

// ---- replay ------------------------------------------------------------------

Trajectory rollout_single(const Policy& policy, const Trajectory& h) {
  if (h.agents.size() != 1) throw ValidationError("single trajectory must have one agent");
  const Env env(std::make_shared<const SceneContext>(h.scene),
                std::make_shared<const PrimitiveDecoder>(h.decoder), h.env);
  Trajectory out = h;
  out.steps.clear();
  const AgentSpec& a = h.agents[0];
  EnvState s = env.reset(a.start, a.heading, a.goal, a.attention_target);
  Rng rng = make_stream(h.master_seed, "eval_action", static_cast<std::uint64_t>(h.episode));
  for (int step = 0; s.termination == Termination::kRunning; ++step) {
    const PolicyOutput o = policy.forward(make_observation(s, h.env));
    const Eigen::VectorXd act = h.mode == ActionMode::kMean
                                    ? Eigen::VectorXd(o.mu.col(0))
                                    : sample_action(o.mu.col(0), o.log_std, rng).a;
    StepResult r = env.step(s, act, h.stage);
    StepRecord rec;
    rec.step = step;
    rec.time = s.time;
    rec.action = act;
    rec.frames = std::move(r.primitive.frames);
    rec.reward = r.reward;
    rec.goal_distance = r.state.goal_distance;
    rec.termination = r.state.termination;
    out.steps.push_back(std::move(rec));
    s = std::move(r.state);
  }
  return out;
}

CrowdScenario scenario_of(const Trajectory& t) {
  CrowdScenario sc;
  sc.scene = t.scene;
  sc.agents = t.agents;
  sc.max_rounds = t.max_rounds;
  sc.bbox_margin = t.bbox_margin;
  sc.snapshot = t.snapshot;
  sc.env = t.env;
  sc.decoder = t.decoder;
  return sc;
}

ReplayResult replay(const Trajectory& t, const std::string& traj_path) {
  const std::string expect = trajectory_hash(t);
  if (expect != t.config_hash) {
    throw ValidationError("config hash mismatch: header says " + t.config_hash +
                          ", rollout definition hashes to " + expect +
                          "; refusing to replay");
  }
  if (t.checkpoint.empty()) throw ValidationError("trajectory names no checkpoint");
  std::filesystem::path ck = t.checkpoint;
  if (!std::filesystem::exists(ck) && ck.is_relative() && !traj_path.empty()) {
    ck = std::filesystem::path(traj_path).parent_path() / ck;
  }
  if (!std::filesystem::exists(ck)) {
    throw ValidationError("checkpoint not found: " + t.checkpoint);
  }
  std::ifstream in(ck, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (hash_bytes(bytes) != t.checkpoint_hash) {
    throw ValidationError("checkpoint " + ck.string() + " hashes to " + hash_bytes(bytes) +
                          ", trajectory expects " + t.checkpoint_hash);
  }
  const Policy policy = policy_from_checkpoint(load_checkpoint(ck.string()));

  ReplayResult res;
  if (t.kind == "single") {
    res.regenerated = rollout_single(policy, t);
  } else if (t.kind == "crowd") {
    res.regenerated = simulate_crowd(scenario_of(t), policy);
  } else {
    throw ValidationError("unknown trajectory kind '" + t.kind + "'");
  }
  const auto& a = t.steps;
  const auto& b = res.regenerated.steps;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::string why;
    if (!same_step(a[i], b[i], &why)) {
      res.first_divergent_step = static_cast<int>(i);
      res.steps_compared = static_cast<int>(i + 1);
      res.detail = "step " + std::to_string(i) + " (agent " + std::to_string(a[i].agent) +
                   ", round " + std::to_string(a[i].step) + "): " + why + " differs";
      return res;
    }
  }
  res.steps_compared = static_cast<int>(n);
  if (a.size() != b.size()) {
    res.first_divergent_step = static_cast<int>(n);
    res.detail = "file has " + std::to_string(a.size()) + " steps, regeneration has " +
                 std::to_string(b.size());
    return res;
  }
  res.match = true;
  res.detail = std::to_string(n) + " steps identical";
  return res;
}

ReplayResult replay_file(const std::string& path) { return replay(read_trajectory(path), path); }

}  // namespace egonav
