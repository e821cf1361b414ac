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

#include "egonav/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace egonav {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MapM = Eigen::Map<MatrixXd>;
using CMapM = Eigen::Map<const MatrixXd>;

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void check_finite(const MatrixXd& m, const char* node) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string("policy: non-finite value at node ") + node);
  }
}

MatrixXd sigmoid(const MatrixXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

struct GruParams {
  CMapM wi, wh, bi, bh;
};

MatrixXd gru_step(const GruParams& p, const MatrixXd& x, const MatrixXd& h,
                  GruStepCache& c) {
  const int H = static_cast<int>(h.rows());
  MatrixXd gi = p.wi * x;
  gi.colwise() += p.bi.col(0);
  MatrixXd gh = p.wh * h;
  gh.colwise() += p.bh.col(0);
  c.x = x;
  c.h = h;
  c.r = sigmoid(gi.topRows(H) + gh.topRows(H));
  c.z = sigmoid(gi.middleRows(H, H) + gh.middleRows(H, H));
  c.hn = gh.bottomRows(H);
  c.n = (gi.bottomRows(H).array() + c.r.array() * c.hn.array()).tanh().matrix();
  return ((1.0 - c.z.array()) * c.n.array() + c.z.array() * h.array()).matrix();
}

// Backpropagates dh_next through one step; returns dL/dh_prev.
MatrixXd gru_step_backward(const GruParams& p, const GruStepCache& c,
                           const MatrixXd& dh_next, MapM dwi, MapM dwh, MapM dbi,
                           MapM dbh) {
  const int H = static_cast<int>(c.h.rows());
  const int B = static_cast<int>(c.h.cols());
  const auto dn = (dh_next.array() * (1.0 - c.z.array())).eval();
  const auto dz = (dh_next.array() * (c.h.array() - c.n.array())).eval();
  const auto dan = (dn * (1.0 - c.n.array().square())).eval();
  const auto dr = (dan * c.hn.array()).eval();
  MatrixXd dgi(3 * H, B), dgh(3 * H, B);
  dgi.topRows(H) = (dr * c.r.array() * (1.0 - c.r.array())).matrix();
  dgi.middleRows(H, H) = (dz * c.z.array() * (1.0 - c.z.array())).matrix();
  dgi.bottomRows(H) = dan.matrix();
  dgh.topRows(2 * H) = dgi.topRows(2 * H);
  dgh.bottomRows(H) = (dan * c.r.array()).matrix();
  dwi.noalias() += dgi * c.x.transpose();
  dwh.noalias() += dgh * c.h.transpose();
  dbi.col(0) += dgi.rowwise().sum();
  dbh.col(0) += dgh.rowwise().sum();
  MatrixXd dh = (dh_next.array() * c.z.array()).matrix();
  dh.noalias() += p.wh.transpose() * dgh;
  return dh;
}

}  // namespace

void PolicyConfig::validate() const {
  if (latent_dim < 1 || num_rays < 2 || seed_hidden < 1 || sensing_hidden < 1 ||
      pe_bands < 1 || scalar_width < 1 || trunk_width < 1) {
    throw ValidationError("policy: dimensions must be positive");
  }
  if (!(last_layer_scale > 0.0) || !std::isfinite(init_log_std)) {
    throw ValidationError("policy: bad initialization constants");
  }
}

VectorXd positional_encoding(double x, int bands) {
  VectorXd out(2 * bands);
  double f = kPi;
  for (int l = 0; l < bands; ++l, f *= 2.0) {
    out[2 * l] = std::sin(f * x);
    out[2 * l + 1] = std::cos(f * x);
  }
  return out;
}

VectorXd make_observation(const EnvState& s, const EnvConfig& env) {
  const int M3 = kNumMarkers * 3;
  const int N = static_cast<int>(s.sensing.cols());
  const int T = static_cast<int>(s.seed.size());
  if (T != kSeedFrames || static_cast<int>(s.marker_dirs.size()) != T ||
      s.sensing.rows() != T) {
    throw ValidationError("make_observation: malformed state");
  }
  VectorXd obs(T * (2 * M3 + N) + 2);
  const Canonicalized can = canonicalize(s.seed);
  for (int k = 0; k < T; ++k) {
    double* out = obs.data() + k * 2 * M3;
    for (int m = 0; m < kNumMarkers; ++m) {
      const Vec3 p = can.seed[k].at(m);
      const Vec3 d = can.to_canonical.rotate(Vec3(s.marker_dirs[k].row(m).transpose()));
      for (int c = 0; c < 3; ++c) {
        out[3 * m + c] = p[c];
        out[M3 + 3 * m + c] = d[c];
      }
    }
  }
  const int off = T * 2 * M3;
  for (int k = 0; k < T; ++k) {
    obs.segment(off + k * N, N) = s.sensing.row(k).transpose() / env.sensing.range;
  }
  obs[off + T * N] = s.goal_distance;
  obs[off + T * N + 1] = static_cast<double>(s.remaining) / env.max_steps;
  return obs;
}

void Policy::add_block(const std::string& name, int rows, int cols) {
  const std::size_t off = layout_.empty() ? 0 : layout_.back().offset + layout_.back().size();
  layout_.push_back({name, rows, cols, off});
}

Policy::Policy(PolicyConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const int H1 = cfg_.seed_hidden, H2 = cfg_.sensing_hidden, W = cfg_.trunk_width;
  const int pe_dim = PolicyConfig::kScalars * 2 * cfg_.pe_bands;
  add_block("seed_gru.w_i", 3 * H1, cfg_.seed_step_dim());
  add_block("seed_gru.w_h", 3 * H1, H1);
  add_block("seed_gru.b_i", 3 * H1, 1);
  add_block("seed_gru.b_h", 3 * H1, 1);
  add_block("sensing_gru.w_i", 3 * H2, cfg_.num_rays);
  add_block("sensing_gru.w_h", 3 * H2, H2);
  add_block("sensing_gru.b_i", 3 * H2, 1);
  add_block("sensing_gru.b_h", 3 * H2, 1);
  add_block("scalar.w", cfg_.scalar_width, pe_dim);
  add_block("scalar.b", cfg_.scalar_width, 1);
  add_block("trunk1.w", W, cfg_.concat_dim());
  add_block("trunk1.b", W, 1);
  add_block("trunk2.w", W, W);
  add_block("trunk2.b", W, 1);
  add_block("actor.w", cfg_.latent_dim, W);
  add_block("actor.b", cfg_.latent_dim, 1);
  add_block("actor.log_std", cfg_.latent_dim, 1);
  add_block("critic.w", 1, W);
  add_block("critic.b", 1, 1);
  params_ = VectorXd::Zero(layout_.back().offset + layout_.back().size());

  Rng rng = make_stream(init_seed, "policy_init");
  auto fill = [&](const std::string& name, double bound) {
    const ParamBlock& b = block(name);
    for (std::size_t i = 0; i < b.size(); ++i) {
      params_[b.offset + i] = uniform(rng, -bound, bound);
    }
  };
  for (const char* g : {"seed_gru", "sensing_gru"}) {
    const double bound = 1.0 / std::sqrt(std::string(g) == "seed_gru" ? H1 : H2);
    for (const char* part : {".w_i", ".w_h", ".b_i", ".b_h"}) {
      fill(std::string(g) + part, bound);
    }
  }
  fill("scalar.w", 1.0 / std::sqrt(pe_dim));
  fill("scalar.b", 1.0 / std::sqrt(pe_dim));
  fill("trunk1.w", 1.0 / std::sqrt(cfg_.concat_dim()));
  fill("trunk1.b", 1.0 / std::sqrt(cfg_.concat_dim()));
  fill("trunk2.w", 1.0 / std::sqrt(W));
  fill("trunk2.b", 1.0 / std::sqrt(W));
  fill("actor.w", 1.0 / std::sqrt(W));
  params_.segment(block("actor.w").offset, block("actor.w").size()) *= cfg_.last_layer_scale;
  params_.segment(block("actor.log_std").offset, cfg_.latent_dim).setConstant(cfg_.init_log_std);
  fill("critic.w", 1.0 / std::sqrt(W));
}

const ParamBlock& Policy::block(const std::string& name) const {
  for (const ParamBlock& b : layout_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("policy: no parameter block " + name);
}

CMapM Policy::view(const ParamBlock& b) const {
  return CMapM(params_.data() + b.offset, b.rows, b.cols);
}

PolicyOutput Policy::forward(const MatrixXd& obs) const {
  Cache cache;
  return forward(obs, cache);
}

PolicyOutput Policy::forward(const MatrixXd& obs, Cache& c) const {
  if (obs.rows() != cfg_.obs_dim()) {
    throw ValidationError("policy: observation has " + std::to_string(obs.rows()) +
                          " rows, expected " + std::to_string(cfg_.obs_dim()));
  }
  const int B = static_cast<int>(obs.cols());
  const int S = cfg_.seed_step_dim(), N = cfg_.num_rays;
  check_finite(obs, "input");

  const GruParams seed{view(block("seed_gru.w_i")), view(block("seed_gru.w_h")),
                       view(block("seed_gru.b_i")), view(block("seed_gru.b_h"))};
  const GruParams sens{view(block("sensing_gru.w_i")), view(block("sensing_gru.w_h")),
                       view(block("sensing_gru.b_i")), view(block("sensing_gru.b_h"))};
  c.seed_steps.resize(kSeedFrames);
  c.sensing_steps.resize(kSeedFrames);
  MatrixXd h1 = MatrixXd::Zero(cfg_.seed_hidden, B);
  MatrixXd h2 = MatrixXd::Zero(cfg_.sensing_hidden, B);
  for (int k = 0; k < kSeedFrames; ++k) {
    h1 = gru_step(seed, obs.middleRows(k * S, S), h1, c.seed_steps[k]);
    h2 = gru_step(sens, obs.middleRows(kSeedFrames * S + k * N, N), h2,
                  c.sensing_steps[k]);
  }
  check_finite(h1, "seed_gru");
  check_finite(h2, "sensing_gru");

  const int L = cfg_.pe_bands;
  const int srow = kSeedFrames * (S + N);
  c.pe.resize(PolicyConfig::kScalars * 2 * L, B);
  for (int b = 0; b < B; ++b) {
    const double d = obs(srow, b);
    const double scalars[PolicyConfig::kScalars] = {d, std::min(d / 10.0, 1.0),
                                                    obs(srow + 1, b)};
    for (int j = 0; j < PolicyConfig::kScalars; ++j) {
      c.pe.col(b).segment(j * 2 * L, 2 * L) = positional_encoding(scalars[j], L);
    }
  }
  MatrixXd sc = view(block("scalar.w")) * c.pe;
  sc.colwise() += view(block("scalar.b")).col(0);

  c.concat.resize(cfg_.concat_dim(), B);
  c.concat << h1, h2, sc;
  c.t1 = view(block("trunk1.w")) * c.concat;
  c.t1.colwise() += view(block("trunk1.b")).col(0);
  c.t1 = c.t1.array().tanh().matrix();
  c.t2 = view(block("trunk2.w")) * c.t1;
  c.t2.colwise() += view(block("trunk2.b")).col(0);
  c.t2 = c.t2.array().tanh().matrix();
  check_finite(c.t2, "trunk");

  PolicyOutput out;
  out.mu = view(block("actor.w")) * c.t2;
  out.mu.colwise() += view(block("actor.b")).col(0);
  check_finite(out.mu, "actor");
  MatrixXd v = view(block("critic.w")) * c.t2;
  v.array() += params_[block("critic.b").offset];
  out.value = v.row(0).transpose();
  check_finite(v, "critic");
  out.log_std = view(block("actor.log_std")).col(0);
  check_finite(out.log_std, "log_std");
  out.features = c.t2;
  return out;
}

void Policy::backward(const Cache& c, const MatrixXd& d_mu, const VectorXd& d_value,
                      const VectorXd& d_log_std, VectorXd& grad) const {
  if (grad.size() != params_.size()) grad = VectorXd::Zero(params_.size());
  auto g = [&](const std::string& name) {
    const ParamBlock& b = block(name);
    return MapM(grad.data() + b.offset, b.rows, b.cols);
  };
  const MatrixXd dv = d_value.transpose();

  g("actor.w").noalias() += d_mu * c.t2.transpose();
  g("actor.b").col(0) += d_mu.rowwise().sum();
  g("actor.log_std").col(0) += d_log_std;
  g("critic.w").noalias() += dv * c.t2.transpose();
  g("critic.b")(0, 0) += d_value.sum();

  MatrixXd dt2 = view(block("actor.w")).transpose() * d_mu;
  dt2.noalias() += view(block("critic.w")).transpose() * dv;
  const MatrixXd da2 = (dt2.array() * (1.0 - c.t2.array().square())).matrix();
  g("trunk2.w").noalias() += da2 * c.t1.transpose();
  g("trunk2.b").col(0) += da2.rowwise().sum();
  const MatrixXd dt1 = view(block("trunk2.w")).transpose() * da2;
  const MatrixXd da1 = (dt1.array() * (1.0 - c.t1.array().square())).matrix();
  g("trunk1.w").noalias() += da1 * c.concat.transpose();
  g("trunk1.b").col(0) += da1.rowwise().sum();
  const MatrixXd dcat = view(block("trunk1.w")).transpose() * da1;

  const int H1 = cfg_.seed_hidden, H2 = cfg_.sensing_hidden;
  const MatrixXd dsc = dcat.bottomRows(cfg_.scalar_width);
  g("scalar.w").noalias() += dsc * c.pe.transpose();
  g("scalar.b").col(0) += dsc.rowwise().sum();

  const GruParams seed{view(block("seed_gru.w_i")), view(block("seed_gru.w_h")),
                       view(block("seed_gru.b_i")), view(block("seed_gru.b_h"))};
  const GruParams sens{view(block("sensing_gru.w_i")), view(block("sensing_gru.w_h")),
                       view(block("sensing_gru.b_i")), view(block("sensing_gru.b_h"))};
  MatrixXd dh1 = dcat.topRows(H1);
  MatrixXd dh2 = dcat.middleRows(H1, H2);
  for (int k = kSeedFrames - 1; k >= 0; --k) {
    dh1 = gru_step_backward(seed, c.seed_steps[k], dh1, g("seed_gru.w_i"),
                            g("seed_gru.w_h"), g("seed_gru.b_i"), g("seed_gru.b_h"));
    dh2 = gru_step_backward(sens, c.sensing_steps[k], dh2, g("sensing_gru.w_i"),
                            g("sensing_gru.w_h"), g("sensing_gru.b_i"),
                            g("sensing_gru.b_h"));
  }
}

ActionSample sample_action(const VectorXd& mu, const VectorXd& log_std, Rng& rng) {
  ActionSample s;
  s.a.resize(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    s.a[i] = mu[i] + std::exp(log_std[i]) * standard_normal(rng);
  }
  s.log_prob = gaussian_log_prob(s.a, mu, log_std);
  return s;
}

double gaussian_log_prob(const VectorXd& a, const VectorXd& mu, const VectorXd& log_std) {
  const VectorXd z = ((a - mu).array() * (-log_std).array().exp()).matrix();
  return -0.5 * z.squaredNorm() - log_std.sum() - kHalfLog2Pi * static_cast<double>(a.size());
}

double gaussian_entropy(const VectorXd& log_std) {
  return log_std.sum() + (0.5 + kHalfLog2Pi) * static_cast<double>(log_std.size());
}

double kl_to_standard_normal(const VectorXd& mu, const VectorXd& log_std) {
  const auto var = (2.0 * log_std.array()).exp();
  return (0.5 * (var + mu.array().square() - 1.0) - log_std.array()).sum();
}

Adam::Adam(std::size_t n, AdamConfig cfg)
    : m(VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v(VectorXd::Zero(static_cast<Eigen::Index>(n))),
      cfg_(cfg) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  ++t;
  m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
  v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  params.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
}

}  // namespace egonav
