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

#include "egonav/body.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "egonav/rng.hpp"

namespace egonav {
namespace {

constexpr double kSwingStart = 0.1;
constexpr double kSwingEnd = 0.9;

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

double swing_progress(double phase) {
  return std::clamp((phase - kSwingStart) / (kSwingEnd - kSwingStart), 0.0, 1.0);
}

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

struct FootState {
  Vec2 center;  // ground point under the ankle
  double yaw;
};

FootState foot_from_markers(const MarkerFrame& f, Foot foot,
                            const BodyDims& body) {
  const int heel = foot == Foot::kLeft ? kHeelLeft : kHeelRight;
  const int toe = foot == Foot::kLeft ? kToeLeft : kToeRight;
  const Vec2 h = xy(f.at(heel));
  const Vec2 t = xy(f.at(toe));
  const Vec2 d = t - h;
  // heel = c - back * u, toe = c + front * u
  const double back = body.heel_back, front = body.toe_front;
  const Vec2 c = (front * h + back * t) / (back + front);
  return {c, std::atan2(d.y(), d.x())};
}

void place_foot(MarkerFrame& f, Foot foot, const FootState& s, double z,
                const BodyDims& body) {
  const int heel = foot == Foot::kLeft ? kHeelLeft : kHeelRight;
  const int toe = foot == Foot::kLeft ? kToeLeft : kToeRight;
  const Vec2 u(std::cos(s.yaw), std::sin(s.yaw));
  const Vec2 h = s.center - body.heel_back * u;
  const Vec2 t = s.center + body.toe_front * u;
  f.positions.row(heel) << h.x(), h.y(), z;
  f.positions.row(toe) << t.x(), t.y(), z;
}

struct UpperBody {
  Vec2 base;
  double heading;
  double head_yaw;
  double head_pitch;
  double sway;                   // signed lateral offset
  std::array<double, 6> jitter;  // pelvis, sh_l, sh_r, hip_l, hip_r, head
};

void place_upper_body(MarkerFrame& f, const UpperBody& u, const BodyDims& b) {
  const Vec2 fwd(std::cos(u.heading), std::sin(u.heading));
  const Vec2 left(-fwd.y(), fwd.x());
  const Vec2 base = u.base + u.sway * left;
  auto put = [&](int m, const Vec2& p, double z) {
    f.positions.row(m) << p.x(), p.y(), z;
  };
  put(kPelvis, base, b.pelvis_height + u.jitter[0]);
  put(kShoulderLeft, base + b.shoulder_half_width * left,
      b.shoulder_height + u.jitter[1]);
  put(kShoulderRight, base - b.shoulder_half_width * left,
      b.shoulder_height + u.jitter[2]);
  put(kHipLeft, base + b.hip_half_width * left, b.hip_height + u.jitter[3]);
  put(kHipRight, base - b.hip_half_width * left, b.hip_height + u.jitter[4]);
  put(kHeadTop, base, b.head_height + u.jitter[5]);
  const double gaze = u.heading + u.head_yaw;
  const Vec2 gf(std::cos(gaze), std::sin(gaze));
  const Vec2 gl(-gf.y(), gf.x());
  const Vec2 eye_center = base + b.eye_forward * std::cos(u.head_pitch) * gf;
  const double eye_z =
      b.eye_height + b.eye_forward * std::sin(u.head_pitch) + u.jitter[5];
  put(kEyeLeft, eye_center + b.eye_half_separation * gl, eye_z);
  put(kEyeRight, eye_center - b.eye_half_separation * gl, eye_z);
}

void check_seed(std::span<const MarkerFrame> seed) {
  if (seed.size() != static_cast<std::size_t>(kSeedFrames)) {
    throw ValidationError("decoder: seed must contain exactly 2 frames");
  }
  for (const MarkerFrame& f : seed) {
    if (!f.positions.allFinite() || !f.velocities.allFinite()) {
      throw ValidationError("decoder: seed contains non-finite markers");
    }
  }
}

}  // namespace

const char* marker_name(int m) {
  static constexpr const char* kNames[kNumMarkers] = {
      "pelvis",     "head_top",       "eye_left", "eye_right",
      "shoulder_left", "shoulder_right", "hip_left", "hip_right",
      "heel_left",  "heel_right",     "toe_left", "toe_right"};
  return (m >= 0 && m < kNumMarkers) ? kNames[m] : "?";
}

MarkerFrame standing_frame(const Vec2& position, double heading,
                           const BodyDims& body) {
  MarkerFrame f;
  UpperBody u{position, heading, 0.0, 0.0, 0.0, {0, 0, 0, 0, 0, 0}};
  place_upper_body(f, u, body);
  const Vec2 left(-std::sin(heading), std::cos(heading));
  place_foot(f, Foot::kLeft, {position + body.foot_half_separation * left, heading},
             0.0, body);
  place_foot(f, Foot::kRight,
             {position - body.foot_half_separation * left, heading}, 0.0, body);
  return f;
}

std::vector<MarkerFrame> standing_seed(const Vec2& position, double heading,
                                       const BodyDims& body) {
  const MarkerFrame f = standing_frame(position, heading, body);
  return {f, f};
}

Vec3 derive_view(const MarkerFrame& frame, double head_pitch) {
  const Vec2 d = xy(frame.at(kEyeLeft) - frame.at(kEyeRight));
  const double n = d.norm();
  if (!(n > 1e-9)) throw ValidationError("derive_view: coincident eye markers");
  const Vec2 f(d.y() / n, -d.x() / n);
  return {std::cos(head_pitch) * f.x(), std::cos(head_pitch) * f.y(),
          std::sin(head_pitch)};
}

Vec2 derive_forward(const MarkerFrame& frame) {
  const Vec2 d = xy(frame.at(kHipLeft) - frame.at(kHipRight));
  const double n = d.norm();
  if (!(n > 1e-9)) throw ValidationError("derive_forward: coincident hip markers");
  Vec2 f(d.y() / n, -d.x() / n);
  const Vec2 s = xy(frame.at(kShoulderLeft) - frame.at(kShoulderRight));
  const Vec2 fs(s.y(), -s.x());
  if (fs.dot(f) < 0.0) f = -f;
  return f;
}

Rigid2 canonical_transform(const MarkerFrame& last) {
  const Vec2 fwd = derive_forward(last);
  const double angle = -std::atan2(fwd.y(), fwd.x());
  const Vec2 p = xy(last.at(kPelvis));
  return {angle, -rotate2(p, angle)};
}

MarkerFrame transform_frame(const MarkerFrame& f, const Rigid2& g) {
  MarkerFrame out;
  for (int m = 0; m < kNumMarkers; ++m) {
    out.positions.row(m) = g.apply(f.at(m)).transpose();
    out.velocities.row(m) = g.rotate(f.vel(m)).transpose();
  }
  return out;
}

Canonicalized canonicalize(std::span<const MarkerFrame> seed,
                           std::span<const Vec3> extras) {
  if (seed.empty()) throw ValidationError("canonicalize: empty seed");
  Canonicalized c;
  c.to_canonical = canonical_transform(seed.back());
  for (const MarkerFrame& f : seed) c.seed.push_back(transform_frame(f, c.to_canonical));
  for (const Vec3& p : extras) c.extras.push_back(c.to_canonical.apply(p));
  return c;
}

PrimitiveDecoder::PrimitiveDecoder(DecoderConfig cfg) : cfg_(cfg) {
  if (cfg_.latent_dim < 4 || cfg_.latent_dim > 128) {
    throw ValidationError("decoder: latent_dim must be in [4, 128]");
  }
  const int noise_dims = cfg_.latent_dim - 4;
  projection_ = Eigen::MatrixXd::Zero(7, noise_dims);
  Rng rng = make_stream(cfg_.projection_seed, "decoder-projection");
  const double scale = noise_dims > 0 ? 1.0 / std::sqrt(double(noise_dims)) : 0.0;
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < noise_dims; ++c) {
      projection_(r, c) = scale * standard_normal(rng);
    }
  }
  beta_ = cfg_.pose_beta >= 0.0 ? cfg_.pose_beta : calibrate_pose_beta(cfg_);
}

DecodeResult PrimitiveDecoder::decode(std::span<const MarkerFrame> seed,
                                      const GaitState& gait,
                                      const Eigen::VectorXd& a) const {
  if (a.size() != cfg_.latent_dim) {
    throw std::invalid_argument("decoder: latent has wrong dimension");
  }
  if (!a.allFinite()) throw std::invalid_argument("decoder: non-finite latent");
  check_seed(seed);
  const BodyDims& body = cfg_.body;

  const Rigid2 to_canonical = canonical_transform(seed.back());
  const Rigid2 to_world = to_canonical.inverse();
  const MarkerFrame last = transform_frame(seed.back(), to_canonical);

  DecodeResult out;
  ChannelRequests& req = out.requests;
  req.speed = gait.speed + cfg_.speed_gain * a[0];
  req.turn = cfg_.turn_gain * a[1];
  req.head_yaw = cfg_.yaw_gain * a[2];
  req.head_pitch = cfg_.pitch_gain * a[3];
  const double s0 = std::clamp(gait.speed, 0.0, cfg_.max_speed);
  const double s1 = std::clamp(req.speed, 0.0, cfg_.max_speed);
  const double omega = std::clamp(req.turn, -cfg_.max_turn_rate, cfg_.max_turn_rate);
  const double yaw0 = std::clamp(gait.head_yaw, -cfg_.max_head_yaw, cfg_.max_head_yaw);
  const double yaw1 = std::clamp(req.head_yaw, -cfg_.max_head_yaw, cfg_.max_head_yaw);
  const double pitch0 =
      std::clamp(gait.head_pitch, -cfg_.max_head_pitch, cfg_.max_head_pitch);
  const double pitch1 =
      std::clamp(req.head_pitch, -cfg_.max_head_pitch, cfg_.max_head_pitch);

  Eigen::Matrix<double, 7, 1> noise = Eigen::Matrix<double, 7, 1>::Zero();
  if (cfg_.latent_dim > 4) {
    noise = projection_ * a.tail(cfg_.latent_dim - 4);
  }
  const double sway = cfg_.sway_amplitude * std::tanh(noise[0]);
  std::array<double, 6> jitter_amp;
  for (int k = 0; k < 6; ++k) {
    jitter_amp[k] = cfg_.jitter_amplitude * std::tanh(noise[k + 1]);
  }

  // Gait integration in canonical coordinates.
  Vec2 pos = xy(last.at(kPelvis));
  double heading = 0.0;
  double phase = std::clamp(gait.phase, 0.0, std::nextafter(1.0, 0.0));
  Foot stance = gait.stance;
  std::array<FootState, 2> feet = {foot_from_markers(last, Foot::kLeft, body),
                                   foot_from_markers(last, Foot::kRight, body)};
  const double L = cfg_.step_length;

  // One lookahead frame past the primitive gives forward-difference
  // velocities for the last frame.
  std::array<MarkerFrame, kFutureFrames + 1> frames;
  const double omega0 = std::clamp(gait.turn_rate, -cfg_.max_turn_rate, cfg_.max_turn_rate);
  GaitState end_state;
  for (int k = 1; k <= kFutureFrames + 1; ++k) {
    const double ramp = std::min(double(k) / kFutureFrames, 1.0);
    const double speed = s0 + (s1 - s0) * ramp;
    heading += (omega0 + (omega - omega0) * ramp) * kFrameDt;
    pos += speed * kFrameDt * Vec2(std::cos(heading), std::sin(heading));

    const Foot swing = stance == Foot::kLeft ? Foot::kRight : Foot::kLeft;
    const double advance = speed * kFrameDt / L;
    double new_phase = phase + advance;
    // Swing foot: cover the fraction of the remaining way to the landing
    // target implied by the progress increment.
    auto step_swing = [&](double from, double to) {
      const double s_old = smoothstep(swing_progress(from));
      const double s_new = smoothstep(swing_progress(to));
      if (s_old >= 1.0 || s_new <= s_old) return;
      const double side = swing == Foot::kLeft ? 1.0 : -1.0;
      const Vec2 fwd(std::cos(heading), std::sin(heading));
      const Vec2 left(-fwd.y(), fwd.x());
      const Vec2 target = pos + (1.5 - std::min(to, 1.0)) * L * fwd +
                          side * body.foot_half_separation * left;
      FootState& f = feet[static_cast<int>(swing)];
      const double frac = s_new >= 1.0 ? 1.0 : (s_new - s_old) / (1.0 - s_old);
      f.center += frac * (target - f.center);
      f.yaw += frac * wrap_angle(heading - f.yaw);
    };
    if (new_phase >= 1.0) {
      step_swing(phase, 1.0);
      stance = swing;
      new_phase = std::min(new_phase - 1.0, std::nextafter(1.0, 0.0));
    } else {
      step_swing(phase, new_phase);
    }
    phase = new_phase;

    const double w = std::pow(std::sin(kPi * double(k) / kFutureFrames), 2);
    const double blend = smoothstep(ramp);
    UpperBody u;
    u.base = pos;
    u.heading = heading;
    u.head_yaw = yaw0 + (yaw1 - yaw0) * blend;
    u.head_pitch = pitch0 + (pitch1 - pitch0) * blend;
    u.sway = w * sway;
    for (int j = 0; j < 6; ++j) u.jitter[j] = w * jitter_amp[j];

    MarkerFrame& f = frames[k - 1];
    place_upper_body(f, u, body);
    const Foot swing_now = stance == Foot::kLeft ? Foot::kRight : Foot::kLeft;
    place_foot(f, stance, feet[static_cast<int>(stance)], 0.0, body);
    const double z =
        cfg_.swing_height * std::pow(std::sin(kPi * swing_progress(phase)), 2);
    place_foot(f, swing_now, feet[static_cast<int>(swing_now)], z, body);
    if (k == kFutureFrames) {
      end_state.phase = phase;
      end_state.stance = stance;
      end_state.heading = heading;
    }
  }

  out.future.resize(kFutureFrames);
  for (int k = 0; k < kFutureFrames; ++k) {
    frames[k].velocities = (frames[k + 1].positions - frames[k].positions) / kFrameDt;
    out.future[k] = transform_frame(frames[k], to_world);
  }

  out.next.phase = end_state.phase;
  out.next.stance = end_state.stance;
  out.next.heading = wrap_angle(end_state.heading + to_world.angle);
  out.next.speed = s1;
  out.next.turn_rate = omega;
  out.next.head_yaw = yaw1;
  out.next.head_pitch = pitch1;
  return out;
}

ChannelRequests mid_range_requests(const DecoderConfig& cfg) {
  return {0.5 * cfg.max_speed, 0.0, 0.0, 0.0};
}

PoseScore pose_score(const Eigen::VectorXd& a, const ChannelRequests& req,
                     const DecoderConfig& cfg, double beta) {
  auto penalty = [&](double value, double mid, double half_range) {
    const double e = std::abs(value - mid) / half_range - 1.0;
    return cfg.pose_gamma *
           (softplus(cfg.pose_kappa * e) - softplus(-cfg.pose_kappa));
  };
  const double half_speed = 0.5 * cfg.max_speed;
  double s = beta * a.norm();
  s += penalty(req.speed, half_speed, half_speed);
  s += penalty(req.turn, 0.0, cfg.max_turn_rate);
  s += penalty(req.head_yaw, 0.0, cfg.max_head_yaw);
  s += penalty(req.head_pitch, 0.0, cfg.max_head_pitch);
  return {std::max(s, 0.0)};
}

double calibrate_pose_beta(const DecoderConfig& cfg, double target,
                           double quantile, int draws, std::uint64_t seed) {
  Rng rng = make_stream(seed, "pose-beta-calibration");
  const ChannelRequests mid = mid_range_requests(cfg);
  std::vector<double> norms(draws), penalties(draws);
  Eigen::VectorXd a(cfg.latent_dim);
  for (int n = 0; n < draws; ++n) {
    for (int i = 0; i < cfg.latent_dim; ++i) a[i] = standard_normal(rng);
    ChannelRequests r = mid;
    r.speed += cfg.speed_gain * a[0];
    r.turn += cfg.turn_gain * a[1];
    r.head_yaw += cfg.yaw_gain * a[2];
    r.head_pitch += cfg.pitch_gain * a[3];
    norms[n] = a.norm();
    penalties[n] = pose_score(a, r, cfg, 0.0).score;
  }
  auto q = [&](double beta) {
    std::vector<double> s(draws);
    for (int n = 0; n < draws; ++n) s[n] = beta * norms[n] + penalties[n];
    const std::size_t k = std::min<std::size_t>(
        draws - 1, static_cast<std::size_t>(std::ceil(quantile * draws)) - 1);
    std::nth_element(s.begin(), s.begin() + k, s.end());
    return s[k];
  };
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 100; ++it) {
    const double mid_beta = 0.5 * (lo + hi);
    if (q(mid_beta) > target) {
      hi = mid_beta;
    } else {
      lo = mid_beta;
    }
  }
  return lo;
}

}  // namespace egonav
