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

// Finite-horizon navigation environment over motion primitives.

#ifndef EGONAV_ENV_HPP_
#define EGONAV_ENV_HPP_

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "egonav/body.hpp"
#include "egonav/geometry.hpp"
#include "egonav/scene.hpp"
#include "egonav/sensing.hpp"

namespace egonav {

enum class SceneMode { kSparse, kCrowded };
enum class Stage { kPretrain = 1, kFinetune = 2 };
enum class Termination { kRunning, kSuccess, kPenetration, kTimeout };
enum class AttentionForm { kNormalized, kCosine };

const char* termination_name(Termination t);
Termination termination_from_name(const std::string& s);

inline constexpr double kFloorTolerance = 0.02;
inline constexpr double kSkateTolerance = 0.075;
inline constexpr int kPeneCellThreshold = 3;
inline constexpr double kPoseRewardThreshold = 11.0;
inline constexpr double kPoseAbnormal = 15.0;
inline constexpr double kSparseReward = 0.05;
inline constexpr double kDirectionEpsilon = 1e-6;

struct RewardWeights {
  double floor = 0.1;
  double skate = 0.3;
  double dist = 1.0;
  double ori = 0.1;
  double attention = 0.3;
  double pene_pretrain = 1.0;
  double pene_finetune = 0.1;
  double pose = 0.1;
  double succ = 0.5;

  void validate() const;
};

struct EnvConfig {
  int max_steps = 24;
  double success_reward_thres = 0.1;
  double success_eval_thres = 0.3;
  SceneMode mode = SceneMode::kSparse;
  int body_sample_points = 200;
  double pene_term_fraction = 0.004;
  AttentionForm attention_form = AttentionForm::kNormalized;
  RewardWeights weights;
  SensingConfig sensing;

  void validate() const;
  // Per-frame clipped-depth sum that ends a crowded-mode stage-II episode.
  double crowded_termination_threshold() const {
    return pene_term_fraction * body_sample_points;
  }
};

// Scene plus the derived static occupancy and distance field. Immutable and
// shared between environments.
class SceneContext {
 public:
  explicit SceneContext(SceneMap scene);

  const SceneMap& scene() const { return scene_; }
  const OccupancyGrid& static_grid() const { return grid_; }
  const SdfGrid& static_sdf() const { return sdf_; }

  // Static and scripted obstacles at time t, plus `extra` boxes.
  std::vector<Box2> boxes_at(double t, std::span<const Box2> extra = {}) const;
  // Moving and extra boxes inflated by the walkable margin.
  std::vector<Box2> dynamic_boxes_at(double t, std::span<const Box2> extra = {}) const;

  // Signed distance to the union of static obstacles, dynamic boxes and the
  // outside of the bounds.
  double signed_distance(const Vec2& p, std::span<const Box2> dynamic) const;
  bool walkable(const Vec2& p, double t) const;

 private:
  SceneMap scene_;
  OccupancyGrid grid_;
  SdfGrid sdf_;
};

struct EnvState {
  std::vector<MarkerFrame> seed;        // X^S, world coordinates
  std::vector<MarkerArray> marker_dirs; // X^{S^D}, one M x 3 block per frame
  Eigen::MatrixXd sensing;              // E, T_s x N
  double goal_distance = 0.0;           // d
  int remaining = 0;                    // tau

  GaitState gait;
  double time = 0.0;  // timestamp of the last seed frame
  Vec2 goal = Vec2::Zero();
  Vec2 attention_target = Vec2::Zero();
  Termination termination = Termination::kRunning;
};

struct RewardTerms {
  double floor = 0.0;
  double skate = 0.0;
  double dist = 0.0;
  double ori = 0.0;
  double attention = 0.0;
  double pene = 0.0;
  double pose = 0.0;
  double succ = 0.0;
};

struct RewardBreakdown {
  RewardTerms raw;
  RewardTerms weighted;
  double total = 0.0;
  double pose_score = 0.0;
  double attention_cos = 0.0;  // cos(view, goal direction) at the last frame
  double max_frame_penetration = 0.0;
  int bbox_cells = 0;
};

struct StepResult {
  EnvState state;
  RewardBreakdown reward;
  MotionPrimitive primitive;  // seed + 18 new frames
};

// Reward terms as free functions.
std::pair<double, double> r_contact(std::span<const MarkerFrame> future);
double r_dist(double d_prev, double d_curr);
double r_ori(const Vec2& forward, const Vec2& pelvis, const Vec2& goal);
double r_attention(const Vec3& view, const Vec3& head, const Vec2& goal,
                   AttentionForm form = AttentionForm::kNormalized);
double r_pene_sparse(int nonwalkable_cells);
double r_pene_crowded(double clipped_depth_sum, int frames);
double r_pose(double score);
double r_succ(double d, double thres = 0.1);
RewardBreakdown total_reward(const RewardTerms& terms, const RewardWeights& w,
                             Stage stage);

std::vector<MarkerArray> marker_directions(std::span<const MarkerFrame> seed,
                                           const Vec2& goal);

// 2D bounding box of every marker of every frame.
Box2 marker_bbox(std::span<const MarkerFrame> frames);

// Points on the torso and leg capsules of a frame.
struct CapsuleDims {
  double torso_radius = 0.15;
  double leg_radius = 0.12;
};
std::vector<Vec3> body_sample_points(const MarkerFrame& frame, int count,
                                     const CapsuleDims& dims = {});

struct TerminationInputs {
  double goal_distance = 0.0;
  int remaining = 0;
  int bbox_cells = 0;                 // sparse
  double max_frame_penetration = 0.0; // crowded
};
Termination check_termination(const TerminationInputs& in, const EnvConfig& cfg,
                              Stage stage);

class Env {
 public:
  Env(std::shared_ptr<const SceneContext> scene,
      std::shared_ptr<const PrimitiveDecoder> decoder, EnvConfig cfg);

  // Throws ValidationError for a non-walkable start or goal or when the two
  // are closer than the evaluation threshold.
  EnvState reset(const Vec2& start, double heading, const Vec2& goal,
                 std::optional<Vec2> attention_target = std::nullopt) const;

  // `others` are bounding boxes of other agents, seen as obstacles. Throws
  // std::logic_error when stepping a terminated state.
  StepResult step(const EnvState& state, const Eigen::VectorXd& a, Stage stage,
                  std::span<const Box2> others = {}) const;

  // Recomputes sensing and marker directions of `state`.
  void observe(EnvState& state, std::span<const Box2> others = {}) const;

  const EnvConfig& config() const { return cfg_; }
  const SceneContext& scene() const { return *scene_; }
  const PrimitiveDecoder& decoder() const { return *decoder_; }
  std::shared_ptr<const SceneContext> scene_ptr() const { return scene_; }
  std::shared_ptr<const PrimitiveDecoder> decoder_ptr() const { return decoder_; }

 private:
  std::shared_ptr<const SceneContext> scene_;
  std::shared_ptr<const PrimitiveDecoder> decoder_;
  EnvConfig cfg_;
};

}  // namespace egonav

#endif  // EGONAV_ENV_HPP_
