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

#include "egonav/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace egonav {
namespace {

constexpr double kGoldenAngle = 2.399963229728653;

double clip_positive(double x) { return std::max(x, 0.0); }

void spiral_on_cylinder(const Vec2& axis_xy, double z0, double z1, double radius,
                        double phase, int count, std::vector<Vec3>& out) {
  for (int i = 0; i < count; ++i) {
    const double u = (i + 0.5) / count;
    const double ang = phase + i * kGoldenAngle;
    out.emplace_back(axis_xy.x() + radius * std::cos(ang),
                     axis_xy.y() + radius * std::sin(ang), z0 + u * (z1 - z0));
  }
}

}  // namespace

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kRunning: return "running";
    case Termination::kSuccess: return "success";
    case Termination::kPenetration: return "penetration";
    case Termination::kTimeout: return "timeout";
  }
  return "?";
}

Termination termination_from_name(const std::string& s) {
  for (Termination t : {Termination::kRunning, Termination::kSuccess,
                        Termination::kPenetration, Termination::kTimeout}) {
    if (s == termination_name(t)) return t;
  }
  throw ValidationError("unknown termination: " + s);
}

void RewardWeights::validate() const {
  for (double w : {floor, skate, dist, ori, attention, pene_pretrain,
                   pene_finetune, pose, succ}) {
    if (!(w >= 0.0)) throw ValidationError("reward weights must be non-negative");
  }
}

void EnvConfig::validate() const {
  if (max_steps < 1) throw ValidationError("env.max_steps: must be >= 1");
  if (!(success_reward_thres > 0.0) || !(success_eval_thres > 0.0)) {
    throw ValidationError("env: success thresholds must be positive");
  }
  if (body_sample_points < 1) {
    throw ValidationError("env.body_sample_points: must be >= 1");
  }
  if (!(pene_term_fraction > 0.0)) {
    throw ValidationError("env.pene_term_fraction: must be positive");
  }
  weights.validate();
  sensing.validate();
}

SceneContext::SceneContext(SceneMap scene) : scene_(std::move(scene)) {
  scene_.validate();
  std::vector<Box2> boxes = scene_.static_obstacles;
  for (Box2& b : boxes) b = b.inflated(scene_.walkable_margin);
  grid_ = rasterize_boxes(scene_.bounds, scene_.cell_size, boxes);
  sdf_ = build_sdf(grid_);
}

std::vector<Box2> SceneContext::boxes_at(double t, std::span<const Box2> extra) const {
  std::vector<Box2> out = obstacles_at(scene_, t);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::vector<Box2> SceneContext::dynamic_boxes_at(double t,
                                                 std::span<const Box2> extra) const {
  std::vector<Box2> out = moving_obstacles_at(scene_, t);
  out.insert(out.end(), extra.begin(), extra.end());
  if (scene_.walkable_margin > 0.0) {
    for (Box2& b : out) b = b.inflated(scene_.walkable_margin);
  }
  return out;
}

double SceneContext::signed_distance(const Vec2& p,
                                     std::span<const Box2> dynamic) const {
  const Box2& b = scene_.bounds;
  double d = std::min({p.x() - b.min.x(), b.max.x() - p.x(), p.y() - b.min.y(),
                       b.max.y() - p.y()});
  const Box2 g = sdf_.bounds();
  const Vec2 q = p.cwiseMax(g.min).cwiseMin(g.max);
  d = std::min(d, query_sdf(sdf_, q));
  for (const Box2& box : dynamic) d = std::min(d, box_signed_distance(box, p));
  return d;
}

bool SceneContext::walkable(const Vec2& p, double t) const {
  if (!scene_.bounds.contains(p)) return false;
  for (Box2 b : obstacles_at(scene_, t)) {
    if (b.inflated(scene_.walkable_margin).contains(p)) return false;
  }
  return true;
}

std::pair<double, double> r_contact(std::span<const MarkerFrame> future) {
  double min_z = std::numeric_limits<double>::infinity();
  double min_v = std::numeric_limits<double>::infinity();
  for (const MarkerFrame& f : future) {
    for (int m : kFootMarkers) {
      min_z = std::min(min_z, f.at(m).z());
      min_v = std::min(min_v, f.vel(m).norm());
    }
  }
  return {std::exp(-clip_positive(std::abs(min_z) - kFloorTolerance)),
          std::exp(-clip_positive(min_v - kSkateTolerance))};
}

double r_dist(double d_prev, double d_curr) { return d_prev - d_curr; }

double r_ori(const Vec2& forward, const Vec2& pelvis, const Vec2& goal) {
  const Vec2 g = goal - pelvis;
  const double n = g.norm();
  if (n < kDirectionEpsilon) return 1.0;
  return (forward.dot(g / n) + 1.0) / 2.0;
}

double r_attention(const Vec3& view, const Vec3& head, const Vec2& goal,
                   AttentionForm form) {
  const Vec3 g = Vec3(goal.x(), goal.y(), head.z()) - head;
  const double n = g.norm();
  if (n < kDirectionEpsilon) return 1.0;
  const double c = view.dot(g / n);
  return form == AttentionForm::kNormalized ? (c + 1.0) / 2.0 : c;
}

double r_pene_sparse(int nonwalkable_cells) {
  return nonwalkable_cells < kPeneCellThreshold ? kSparseReward : 0.0;
}

double r_pene_crowded(double clipped_depth_sum, int frames) {
  return std::exp(-clipped_depth_sum / frames);
}

double r_pose(double score) {
  return score < kPoseRewardThreshold ? kSparseReward : 0.0;
}

double r_succ(double d, double thres) { return d < thres ? 1.0 : 0.0; }

RewardBreakdown total_reward(const RewardTerms& t, const RewardWeights& w,
                             Stage stage) {
  RewardBreakdown out;
  out.raw = t;
  const double w_pene = stage == Stage::kPretrain ? w.pene_pretrain : w.pene_finetune;
  RewardTerms& x = out.weighted;
  x.floor = w.floor * t.floor;
  x.skate = w.skate * t.skate;
  x.dist = w.dist * t.dist;
  x.ori = w.ori * t.ori;
  x.attention = w.attention * t.attention;
  x.pene = w_pene * t.pene;
  x.pose = w.pose * t.pose;
  x.succ = w.succ * t.succ;
  out.total = x.floor + x.skate + x.dist + x.ori + x.attention + x.pene +
              x.pose + x.succ;
  return out;
}

std::vector<MarkerArray> marker_directions(std::span<const MarkerFrame> seed,
                                           const Vec2& goal) {
  std::vector<MarkerArray> out(seed.size(), MarkerArray::Zero());
  for (std::size_t k = 0; k < seed.size(); ++k) {
    for (int m = 0; m < kNumMarkers; ++m) {
      const Vec3 p = seed[k].at(m);
      const Vec3 d(goal.x() - p.x(), goal.y() - p.y(), 0.0);
      const double n = d.norm();
      const Vec3 u = n < kDirectionEpsilon ? Vec3::Zero() : Vec3(d / n);
      out[k].row(m) = u.transpose();
    }
  }
  return out;
}

Box2 marker_bbox(std::span<const MarkerFrame> frames) {
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const MarkerFrame& f : frames) {
    for (int m = 0; m < kNumMarkers; ++m) {
      lo = lo.cwiseMin(xy(f.at(m)));
      hi = hi.cwiseMax(xy(f.at(m)));
    }
  }
  return {lo, hi};
}

std::vector<Vec3> body_sample_points(const MarkerFrame& frame, int count,
                                     const CapsuleDims& dims) {
  std::vector<Vec3> out;
  out.reserve(count);
  const Vec2 fwd = derive_forward(frame);
  const double phase = std::atan2(fwd.y(), fwd.x());
  const int torso = (3 * count + 2) / 5;
  const Vec3 pelvis = frame.at(kPelvis);
  const Vec3 head = frame.at(kHeadTop);
  spiral_on_cylinder(xy(pelvis), pelvis.z(), head.z(), dims.torso_radius, phase,
                     torso, out);
  const Vec3 hips = 0.5 * (frame.at(kHipLeft) + frame.at(kHipRight));
  spiral_on_cylinder(xy(hips), hips.z(), 0.0, dims.leg_radius, phase,
                     count - torso, out);
  return out;
}

Termination check_termination(const TerminationInputs& in, const EnvConfig& cfg,
                              Stage stage) {
  if (in.goal_distance < cfg.success_reward_thres) return Termination::kSuccess;
  if (cfg.mode == SceneMode::kSparse) {
    if (r_pene_sparse(in.bbox_cells) == 0.0) return Termination::kPenetration;
  } else if (stage == Stage::kFinetune &&
             in.max_frame_penetration >= cfg.crowded_termination_threshold()) {
    return Termination::kPenetration;
  }
  if (in.remaining <= 0) return Termination::kTimeout;
  return Termination::kRunning;
}

Env::Env(std::shared_ptr<const SceneContext> scene,
         std::shared_ptr<const PrimitiveDecoder> decoder, EnvConfig cfg)
    : scene_(std::move(scene)), decoder_(std::move(decoder)), cfg_(cfg) {
  cfg_.validate();
}

EnvState Env::reset(const Vec2& start, double heading, const Vec2& goal,
                    std::optional<Vec2> attention_target) const {
  if (!scene_->walkable(start, 0.0)) {
    throw ValidationError("reset: start position is not walkable");
  }
  if (!scene_->walkable(goal, 0.0)) {
    throw ValidationError("reset: goal position is not walkable");
  }
  if ((goal - start).norm() < cfg_.success_eval_thres) {
    throw ValidationError("reset: start and goal are closer than the success threshold");
  }
  EnvState s;
  s.seed = standing_seed(start, heading, decoder_->config().body);
  s.gait.heading = heading;
  s.goal = goal;
  s.attention_target = attention_target.value_or(goal);
  s.remaining = cfg_.max_steps;
  observe(s);
  return s;
}

void Env::observe(EnvState& s, std::span<const Box2> others) const {
  const int n = static_cast<int>(s.seed.size());
  s.sensing = ego_sensing(
      s.seed,
      [&](int k) { return scene_->boxes_at(s.time - (n - 1 - k) * kFrameDt, others); },
      scene_->scene().bounds, cfg_.sensing);
  s.marker_dirs = marker_directions(s.seed, s.goal);
  s.goal_distance = (xy(s.seed.back().at(kPelvis)) - s.goal).norm();
}

StepResult Env::step(const EnvState& state, const Eigen::VectorXd& a, Stage stage,
                     std::span<const Box2> others) const {
  if (state.termination != Termination::kRunning) {
    throw std::logic_error("step: episode already terminated");
  }
  const DecodeResult dec = decoder_->decode(state.seed, state.gait, a);

  StepResult out;
  MotionPrimitive& prim = out.primitive;
  prim.frames = state.seed;
  prim.frames.insert(prim.frames.end(), dec.future.begin(), dec.future.end());

  EnvState& next = out.state;
  next.seed.assign(dec.future.end() - kSeedFrames, dec.future.end());
  next.gait = dec.next;
  next.time = state.time + kFutureFrames * kFrameDt;
  next.goal = state.goal;
  next.attention_target = state.attention_target;
  next.remaining = state.remaining - 1;

  const MarkerFrame& last = dec.future.back();
  const Vec2 pelvis = xy(last.at(kPelvis));
  const double d = (pelvis - state.goal).norm();

  RewardTerms t;
  std::tie(t.floor, t.skate) = r_contact(dec.future);
  t.dist = r_dist(state.goal_distance, d);
  t.ori = r_ori(derive_forward(last), pelvis, state.goal);
  const Vec3 view = derive_view(last, dec.next.head_pitch);
  const Vec3 head = 0.5 * (last.at(kEyeLeft) + last.at(kEyeRight));
  t.attention = r_attention(view, head, state.attention_target, cfg_.attention_form);

  RewardBreakdown& rb = out.reward;
  if (cfg_.mode == SceneMode::kSparse) {
    const std::vector<Box2> dyn = scene_->dynamic_boxes_at(next.time, others);
    rb.bbox_cells = nonwalkable_in_bbox(scene_->static_grid(), marker_bbox(prim.frames), dyn);
    t.pene = r_pene_sparse(rb.bbox_cells);
  } else {
    const int T = static_cast<int>(prim.frames.size());
    double total = 0.0;
    for (int k = 0; k < T; ++k) {
      const double tk = state.time + (k - (kSeedFrames - 1)) * kFrameDt;
      const std::vector<Box2> dyn = scene_->dynamic_boxes_at(tk, others);
      double frame_sum = 0.0;
      for (const Vec3& p : body_sample_points(prim.frames[k], cfg_.body_sample_points)) {
        frame_sum += clip_positive(-scene_->signed_distance(xy(p), dyn));
      }
      total += frame_sum;
      rb.max_frame_penetration = std::max(rb.max_frame_penetration, frame_sum);
    }
    t.pene = r_pene_crowded(total, T);
  }
  const double score =
      pose_score(a, dec.requests, decoder_->config(), decoder_->pose_beta()).score;
  t.pose = r_pose(score);
  t.succ = r_succ(d, cfg_.success_reward_thres);

  const RewardBreakdown weighted = total_reward(t, cfg_.weights, stage);
  rb.raw = weighted.raw;
  rb.weighted = weighted.weighted;
  rb.total = weighted.total;
  rb.pose_score = score;
  rb.attention_cos = r_attention(view, head, state.attention_target, AttentionForm::kCosine);

  next.termination = check_termination(
      {d, next.remaining, rb.bbox_cells, rb.max_frame_penetration}, cfg_, stage);
  observe(next, others);
  return out;
}

}  // namespace egonav
