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

// Surrogate generative body. A 12-marker kinematic walker whose decoder turns
// a latent action into the next 18 frames of a 20-frame motion primitive,
// conditioned on the last two frames (the seed).
//
// Latent channel map (canonical coordinates, 40 Hz):
//   a[0]      speed delta          speed' = clamp(speed + speed_gain a0, 0, 1.8)
//   a[1]      turn rate            omega  = clamp(a1, -1.5, 1.5) rad/s
//   a[2]      head yaw target      clamp(yaw_gain a2, -1, 1) rad
//   a[3]      head pitch target    clamp(pitch_gain a3, -0.5, 0.5) rad
//   a[4..d)   fixed random projection -> lateral sway + vertical marker jitter
//
// Speed and turn rate ramp linearly across the primitive from the previous
// values, heading integrates the turn rate, and the gait phase advances by
// travelled distance / step_length. Velocities are forward differences; the
// last frame differences against one lookahead frame. The stance foot is
// pinned; the swing foot travels during phase [0.1, 0.9] along an arc of peak
// height swing_height and is planted otherwise, so one foot is always at rest.

#ifndef EGONAV_BODY_HPP_
#define EGONAV_BODY_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "egonav/geometry.hpp"

namespace egonav {

// Marker indices of the surrogate layout.
enum Marker : int {
  kPelvis = 0,
  kHeadTop,
  kEyeLeft,
  kEyeRight,
  kShoulderLeft,
  kShoulderRight,
  kHipLeft,
  kHipRight,
  kHeelLeft,
  kHeelRight,
  kToeLeft,
  kToeRight,
  kNumMarkers
};

inline constexpr std::array<int, 4> kFootMarkers = {kHeelLeft, kHeelRight,
                                                    kToeLeft, kToeRight};
inline constexpr int kPrimitiveFrames = 20;  // T
inline constexpr int kSeedFrames = 2;        // T_s
inline constexpr int kFutureFrames = kPrimitiveFrames - kSeedFrames;
inline constexpr double kFrameDt = 0.025;    // 40 Hz

const char* marker_name(int m);

// Fixed body proportions (meters), body height 1.7 m.
struct BodyDims {
  double pelvis_height = 0.95;
  double hip_height = 0.90;
  double hip_half_width = 0.10;
  double shoulder_height = 1.45;
  double shoulder_half_width = 0.20;
  double head_height = 1.70;
  double eye_height = 1.60;
  double eye_forward = 0.08;
  double eye_half_separation = 0.035;
  double foot_half_separation = 0.10;
  double heel_back = 0.05;
  double toe_front = 0.15;
};

using MarkerArray = Eigen::Matrix<double, kNumMarkers, 3, Eigen::RowMajor>;

struct MarkerFrame {
  MarkerArray positions = MarkerArray::Zero();
  MarkerArray velocities = MarkerArray::Zero();

  Vec3 at(int m) const { return positions.row(m).transpose(); }
  Vec3 vel(int m) const { return velocities.row(m).transpose(); }
  bool operator==(const MarkerFrame& o) const {
    return positions == o.positions && velocities == o.velocities;
  }
};

struct MotionPrimitive {
  std::vector<MarkerFrame> frames;  // kPrimitiveFrames: seed then future

  std::span<const MarkerFrame> seed() const {
    return {frames.data(), static_cast<std::size_t>(kSeedFrames)};
  }
  std::span<const MarkerFrame> future() const {
    return {frames.data() + kSeedFrames, frames.size() - kSeedFrames};
  }
};

enum class Foot : int { kLeft = 0, kRight = 1 };

struct GaitState {
  double phase = 0.0;  // [0, 1) within the current step
  Foot stance = Foot::kLeft;
  double heading = 0.0;
  double speed = 0.0;
  double turn_rate = 0.0;
  double head_yaw = 0.0;
  double head_pitch = 0.0;

  bool operator==(const GaitState&) const = default;
};

struct DecoderConfig {
  int latent_dim = 16;
  double speed_gain = 0.4;
  double max_speed = 1.8;
  double turn_gain = 1.0;
  double max_turn_rate = 1.5;
  double yaw_gain = 0.5;
  double max_head_yaw = 1.0;
  double pitch_gain = 0.25;
  double max_head_pitch = 0.5;
  double step_length = 0.65;
  double swing_height = 0.05;
  double sway_amplitude = 0.08;
  double jitter_amplitude = 0.01;
  std::uint64_t projection_seed = 0x5EEDB0D1ull;
  // Pose score: beta * |a| + sum_c gamma * (softplus(kappa e_c) -
  // softplus(-kappa)). The default is calibrate_pose_beta() at latent_dim 16;
  // beta < 0 means "calibrate at construction".
  double pose_beta = 1.1502026282728863;
  double pose_gamma = 1.0;
  double pose_kappa = 4.0;
  BodyDims body;
};

// Requested (pre-clamp) values of the four gait channels.
struct ChannelRequests {
  double speed = 0.0;
  double turn = 0.0;
  double head_yaw = 0.0;
  double head_pitch = 0.0;
};

struct DecodeResult {
  std::vector<MarkerFrame> future;  // kFutureFrames frames
  GaitState next;
  ChannelRequests requests;
};

class PrimitiveDecoder {
 public:
  explicit PrimitiveDecoder(DecoderConfig cfg = {});

  // Throws std::invalid_argument for a non-finite or mis-sized latent and
  // ValidationError for a malformed seed.
  DecodeResult decode(std::span<const MarkerFrame> seed, const GaitState& gait,
                      const Eigen::VectorXd& a) const;

  const DecoderConfig& config() const { return cfg_; }
  double pose_beta() const { return beta_; }
  const Eigen::MatrixXd& projection() const { return projection_; }

 private:
  DecoderConfig cfg_;
  double beta_ = 0.0;
  Eigen::MatrixXd projection_;  // 7 x (latent_dim - 4)
};

// Canonical standing frame at a floor pose (zero velocities).
MarkerFrame standing_frame(const Vec2& position, double heading,
                           const BodyDims& body = {});
std::vector<MarkerFrame> standing_seed(const Vec2& position, double heading,
                                       const BodyDims& body = {});

// Viewing direction: horizontal normal of the eye segment, tilted by pitch
// (negative pitch looks down). Throws ValidationError for coincident eyes.
Vec3 derive_view(const MarkerFrame& frame, double head_pitch);

// Horizontal body-forward direction from the hips, sign-checked against the
// shoulders. Throws ValidationError for coincident hips.
Vec2 derive_forward(const MarkerFrame& frame);

struct PoseScore {
  double score = 0.0;
};

PoseScore pose_score(const Eigen::VectorXd& a, const ChannelRequests& req,
                     const DecoderConfig& cfg, double beta);

// Monte-Carlo calibration of beta: the smallest multiple such that the
// `quantile` of scores under a ~ N(0, I) at mid-range gait equals `target`.
double calibrate_pose_beta(const DecoderConfig& cfg, double target = 10.0,
                           double quantile = 0.995, int draws = 10000,
                           std::uint64_t seed = 0xCA11B8A7Eull);

// Gait channels at the middle of their ranges for a = 0.
ChannelRequests mid_range_requests(const DecoderConfig& cfg);

struct Canonicalized {
  std::vector<MarkerFrame> seed;
  std::vector<Vec3> extras;
  Rigid2 to_canonical;  // world -> canonical
};

// Puts the last seed frame's pelvis at the origin with body forward along +x.
Canonicalized canonicalize(std::span<const MarkerFrame> seed,
                           std::span<const Vec3> extras = {});

Rigid2 canonical_transform(const MarkerFrame& last);
MarkerFrame transform_frame(const MarkerFrame& f, const Rigid2& g);

}  // namespace egonav

#endif  // EGONAV_BODY_HPP_
