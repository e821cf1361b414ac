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

#include <cmath>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "egonav/checkpoint.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace egonav {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd observations(const std::vector<EnvState>& states, const EnvConfig& cfg = {}) {
  MatrixXd obs(PolicyConfig{}.obs_dim(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    obs.col(static_cast<Eigen::Index>(i)) = make_observation(states[i], cfg);
  }
  return obs;
}

PolicyConfig small_config() {
  PolicyConfig c;
  c.seed_hidden = 6;
  c.sensing_hidden = 5;
  c.scalar_width = 4;
  c.trunk_width = 7;
  c.latent_dim = 3;
  c.last_layer_scale = 1.0;
  c.init_log_std = 0.3;
  return c;
}

TEST(PositionalEncoding, Examples) {
  const VectorXd z = positional_encoding(0.0, 4);
  ASSERT_EQ(z.size(), 8);
  for (int l = 0; l < 4; ++l) {
    EXPECT_DOUBLE_EQ(z[2 * l], 0.0);
    EXPECT_DOUBLE_EQ(z[2 * l + 1], 1.0);
  }
  const VectorXd one = positional_encoding(1.0, 4);
  EXPECT_NEAR(one[0], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(one[1], -1.0);
  EXPECT_NEAR(positional_encoding(0.25, 2)[2], 1.0, 1e-15);
}

TEST(PositionalEncoding, PeriodTwo) {
  Rng rng = make_stream(1, "pe");
  for (int i = 0; i < 100; ++i) {
    const double x = uniform(rng, -5, 5);
    EXPECT_TRUE(positional_encoding(x, 4).isApprox(positional_encoding(x + 2, 4), 1e-12));
  }
}

TEST(Observation, LayoutAndScaling) {
  Rng rng = make_stream(2, "obs");
  const EnvState s = random_states(rng, 1)[0];
  const VectorXd o = make_observation(s, {});
  ASSERT_EQ(o.size(), PolicyConfig{}.obs_dim());
  ASSERT_EQ(o.size(), 2 * 72 + 2 * 32 + 2);
  EXPECT_NEAR(o[72 + 0], 0.0, 1e-12);
  EXPECT_NEAR(o[72 + 1], 0.0, 1e-12);
  EXPECT_NEAR(o[72 + 2], 0.95, 1e-2);
  EXPECT_DOUBLE_EQ(o[208], s.goal_distance);
  EXPECT_DOUBLE_EQ(o[209], s.remaining / 24.0);
  for (int i = 144; i < 208; ++i) {
    EXPECT_GT(o[i], 0.0);
    EXPECT_LE(o[i], 1.0);
  }
}

TEST(Observation, InvariantUnderRigidMotion) {
  SceneMap sc;
  sc.bounds = {Vec2(-20, -20), Vec2(20, 20)};
  const Rigid2 g{0.83, Vec2(3.1, -2.2)};
  const Env env(std::make_shared<SceneContext>(sc), std::make_shared<PrimitiveDecoder>(), {});
  Rng rng = make_stream(3, "rigid_obs");
  EnvState s0 = env.reset(Vec2(0, 0), 0.2, Vec2(4, 3));
  EnvState s1 = env.reset(g.apply(Vec2(0, 0)), 0.2 + g.angle, g.apply(Vec2(4, 3)));
  for (int k = 0; k < 4; ++k) {
    VectorXd a(16);
    for (int i = 0; i < 16; ++i) a[i] = standard_normal(rng);
    s0 = env.step(s0, a, Stage::kPretrain).state;
    s1 = env.step(s1, a, Stage::kPretrain).state;
    const VectorXd o0 = make_observation(s0, {});
    const VectorXd o1 = make_observation(s1, {});
    EXPECT_LT((o0 - o1).cwiseAbs().maxCoeff(), 1e-9);
    const Policy pi(PolicyConfig{}, 1);
    const auto f0 = pi.forward(o0).features;
    const auto f1 = pi.forward(o1).features;
    EXPECT_LT((f0 - f1).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Policy, ParameterLayout) {
  const Policy pi(PolicyConfig{}, 1);
  std::size_t total = 0;
  for (const ParamBlock& b : pi.layout()) {
    EXPECT_EQ(b.offset, total);
    total += b.size();
  }
  EXPECT_EQ(total, pi.num_params());
  EXPECT_EQ(pi.block("seed_gru.w_i").rows, 384);
  EXPECT_EQ(pi.block("seed_gru.w_i").cols, 72);
  EXPECT_EQ(pi.block("sensing_gru.w_h").cols, 64);
  EXPECT_EQ(pi.block("trunk1.w").cols, 128 + 64 + 32);
  EXPECT_EQ(pi.block("scalar.w").cols, 24);
  EXPECT_THROW(pi.block("nope"), std::out_of_range);
}

TEST(Policy, ForwardDeterministicAndDistinguishesDistance) {
  Rng rng = make_stream(4, "fwd");
  const auto states = random_states(rng, 3);
  const Policy pi(PolicyConfig{}, 7);
  MatrixXd obs = observations(states);
  const PolicyOutput a = pi.forward(obs);
  const PolicyOutput b = pi.forward(obs);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.features, b.features);
  obs(208, 0) += 0.5;
  const PolicyOutput c = pi.forward(obs);
  EXPECT_NE(c.features.col(0), a.features.col(0));
  EXPECT_EQ(c.features.col(1), a.features.col(1));
}

TEST(Policy, BatchColumnsAreIndependent) {
  Rng rng = make_stream(5, "batch");
  const auto states = random_states(rng, 5);
  const Policy pi(PolicyConfig{}, 7);
  const MatrixXd obs = observations(states);
  const PolicyOutput all = pi.forward(obs);
  for (int i = 0; i < 5; ++i) {
    const PolicyOutput one = pi.forward(obs.col(i));
    EXPECT_LT((one.mu.col(0) - all.mu.col(i)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(one.value[0], all.value[i], 1e-12);
  }
}

TEST(Policy, DimensionMismatchThrows) {
  const Policy pi(PolicyConfig{}, 1);
  EXPECT_THROW(pi.forward(MatrixXd::Zero(10, 2)), ValidationError);
}

TEST(Policy, NonFiniteInputNamesNode) {
  const Policy pi(PolicyConfig{}, 1);
  MatrixXd obs = MatrixXd::Zero(PolicyConfig{}.obs_dim(), 1);
  obs(0, 0) = std::nan("");
  try {
    pi.forward(obs);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("input"), std::string::npos);
  }
}

TEST(Policy, InitialActionsNearStandardNormal) {
  Rng rng = make_stream(6, "init");
  const Policy pi(PolicyConfig{}, 11);
  const auto states = random_states(rng, 100);
  const PolicyOutput out = pi.forward(observations(states));
  EXPECT_LT(out.mu.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_TRUE(out.log_std.isZero(0.0));
  double kl = 0.0;
  for (int i = 0; i < out.mu.cols(); ++i) kl += kl_to_standard_normal(out.mu.col(i), out.log_std);
  EXPECT_LT(kl / out.mu.cols(), 0.01);
  MatrixXd wild(PolicyConfig{}.obs_dim(), 20);
  for (Eigen::Index i = 0; i < wild.size(); ++i) wild.data()[i] = uniform(rng, -10, 10);
  const PolicyOutput w = pi.forward(wild);
  EXPECT_LT(w.mu.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_TRUE(w.value.allFinite());
}

TEST(Gaussian, LogProbClosedForm) {
  const VectorXd mu = VectorXd::LinSpaced(16, -1, 1);
  EXPECT_NEAR(gaussian_log_prob(mu, mu, VectorXd::Zero(16)), -14.703016531274763, 1e-12);
  EXPECT_NEAR(gaussian_log_prob(mu, mu, VectorXd::Zero(16)), -14.7031, 1e-4);
  VectorXd a = mu;
  a[0] += 2.0;
  EXPECT_NEAR(gaussian_log_prob(a, mu, VectorXd::Zero(16)), -14.703016531274763 - 2.0, 1e-12);
}

TEST(Gaussian, TinySigmaSamplesTheMean) {
  Rng rng = make_stream(7, "tiny");
  const VectorXd mu = VectorXd::LinSpaced(4, -1, 2);
  const VectorXd ls = VectorXd::Constant(4, std::log(1e-8));
  const ActionSample s = sample_action(mu, ls, rng);
  EXPECT_LT((s.a - mu).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_DOUBLE_EQ(s.log_prob, gaussian_log_prob(s.a, mu, ls));
}

TEST(Gaussian, MonteCarloMean) {
  Rng rng = make_stream(8, "mc");
  const VectorXd mu = VectorXd::LinSpaced(3, -1, 1);
  const VectorXd ls = VectorXd::LinSpaced(3, -0.5, 0.5);
  const int n = 100000;
  VectorXd sum = VectorXd::Zero(3);
  double neg_logp = 0.0;
  for (int i = 0; i < n; ++i) {
    const ActionSample s = sample_action(mu, ls, rng);
    sum += s.a;
    neg_logp -= s.log_prob;
  }
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(sum[i] / n, mu[i], 3.0 * std::exp(ls[i]) / std::sqrt(n));
  }
  EXPECT_NEAR(neg_logp / n, gaussian_entropy(ls), 0.02);
}

TEST(Gaussian, EntropyExamples) {
  EXPECT_NEAR(gaussian_entropy(VectorXd::Zero(1)), 1.4189385332046727, 1e-14);
  const VectorXd ls = VectorXd::LinSpaced(16, -1, 1);
  EXPECT_NEAR(gaussian_entropy((ls.array() + std::log(2.0)).matrix()) - gaussian_entropy(ls),
              16 * std::log(2.0), 1e-12);
}

TEST(Gaussian, DensityIntegratesToOne) {
  const VectorXd mu = VectorXd::Constant(1, 0.3);
  const VectorXd ls = VectorXd::Constant(1, std::log(0.7));
  const double h = 1e-3;
  double total = 0.0;
  for (double x = -10; x <= 10; x += h) {
    total += std::exp(gaussian_log_prob(VectorXd::Constant(1, x), mu, ls)) * h;
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Gaussian, KlExamples) {
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(VectorXd::Zero(16), VectorXd::Zero(16)), 0.0);
  VectorXd mu = VectorXd::Zero(16);
  mu[0] = 1.0;
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(mu, VectorXd::Zero(16)), 0.5);
  EXPECT_NEAR(kl_to_standard_normal(VectorXd::Zero(16), VectorXd::Constant(16, std::log(2.0))),
              16 * (1.5 - std::log(2.0)), 1e-12);
}

struct Probe {
  MatrixXd w_mu;
  VectorXd w_v, w_ls;
};

double probe_loss(const Policy& pi, const MatrixXd& obs, const Probe& p) {
  const PolicyOutput o = pi.forward(obs);
  return (o.mu.array() * p.w_mu.array()).sum() + o.value.dot(p.w_v) + o.log_std.dot(p.w_ls);
}

Probe random_probe(Rng& rng, int d, int b) {
  Probe p{MatrixXd(d, b), VectorXd(b), VectorXd(d)};
  for (Eigen::Index i = 0; i < p.w_mu.size(); ++i) p.w_mu.data()[i] = standard_normal(rng);
  for (int i = 0; i < b; ++i) p.w_v[i] = standard_normal(rng);
  for (int i = 0; i < d; ++i) p.w_ls[i] = standard_normal(rng);
  return p;
}

VectorXd analytic_gradient(const Policy& pi, const MatrixXd& obs, const Probe& p) {
  Policy::Cache cache;
  pi.forward(obs, cache);
  VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(pi.num_params()));
  pi.backward(cache, p.w_mu, p.w_v, p.w_ls, g);
  return g;
}

TEST(PolicyGradient, EveryParameterOfSmallNetwork) {
  Rng rng = make_stream(9, "grad_small");
  PolicyConfig cfg = small_config();
  cfg.num_rays = 32;
  Policy pi(cfg, 3);
  const auto states = random_states(rng, 3);
  const MatrixXd obs = observations(states);
  const Probe p = random_probe(rng, cfg.latent_dim, 3);
  const VectorXd g = analytic_gradient(pi, obs, p);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double fd = oracle::central_difference(pi.params(), i, [&] { return probe_loss(pi, obs, p); });
    worst = std::max(worst, oracle::relative_error(g[i], fd));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(PolicyGradient, SampledParametersOfDefaultNetwork) {
  Rng rng = make_stream(10, "grad_default");
  Policy pi(PolicyConfig{}, 5);
  pi.params().segment(pi.block("actor.w").offset, pi.block("actor.w").size()) *= 50.0;
  const auto states = random_states(rng, 4);
  const MatrixXd obs = observations(states);
  const Probe p = random_probe(rng, 16, 4);
  const VectorXd g = analytic_gradient(pi, obs, p);
  for (const ParamBlock& b : pi.layout()) {
    double worst = 0.0;
    for (int k = 0; k < 25; ++k) {
      const auto i = static_cast<Eigen::Index>(b.offset + std::min<std::size_t>(
          b.size() - 1, static_cast<std::size_t>(uniform(rng, 0, static_cast<double>(b.size())))));
      const double fd = oracle::central_difference(pi.params(), i, [&] { return probe_loss(pi, obs, p); });
      worst = std::max(worst, oracle::relative_error(g[i], fd));
    }
    EXPECT_LT(worst, 1e-4) << b.name;
  }
}

TEST(PolicyGradient, ZeroUpstreamGivesZeroAndSumsAreLinear) {
  Rng rng = make_stream(11, "linear");
  const Policy pi(small_config(), 3);
  const MatrixXd obs = observations(random_states(rng, 2));
  Policy::Cache cache;
  pi.forward(obs, cache);
  VectorXd g0 = VectorXd::Zero(static_cast<Eigen::Index>(pi.num_params()));
  pi.backward(cache, MatrixXd::Zero(3, 2), VectorXd::Zero(2), VectorXd::Zero(3), g0);
  EXPECT_TRUE(g0.isZero(0.0));
  const Probe p1 = random_probe(rng, 3, 2), p2 = random_probe(rng, 3, 2);
  const Probe sum{p1.w_mu + p2.w_mu, p1.w_v + p2.w_v, p1.w_ls + p2.w_ls};
  const VectorXd lhs = analytic_gradient(pi, obs, sum);
  const VectorXd rhs = analytic_gradient(pi, obs, p1) + analytic_gradient(pi, obs, p2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam opt(3, {});
  VectorXd x = VectorXd::Zero(3);
  VectorXd g(3);
  g << 2.0, -0.5, 0.0;
  opt.step(x, g);
  EXPECT_NEAR(x[0], -3e-4, 1e-10);
  EXPECT_NEAR(x[1], 3e-4, 1e-10);
  EXPECT_EQ(x[2], 0.0);
  EXPECT_EQ(opt.t, 1);
}

TEST(Adam, MinimizesQuadratic) {
  AdamConfig c;
  c.lr = 0.05;
  Adam opt(2, c);
  VectorXd x(2);
  x << 3.0, -2.0;
  for (int i = 0; i < 2000; ++i) opt.step(x, 2.0 * x);
  EXPECT_LT(x.norm(), 1e-2);
}

TEST(Checkpoint, BitExactRoundTrip) {
  Policy pi(PolicyConfig{}, 13);
  Rng rng = make_stream(12, "ck");
  for (Eigen::Index i = 0; i < pi.params().size(); i += 97) pi.params()[i] = standard_normal(rng) * 1e-300;
  Checkpoint ck = make_checkpoint(pi);
  ck.config_hash = "0123456789abcdef";
  ck.master_seed = 0xFFFFFFFFFFFFFFFFull;
  ck.stage = 2;
  ck.epoch = 17;
  ck.total_steps = 340000;
  ck.eval_reward = 1.0 / 3.0;
  ck.eval_success_rate = 0.93;
  ck.kl_to_prior = 2.718281828459045;
  ck.has_optimizer = true;
  ck.adam_m = VectorXd::Random(pi.params().size());
  ck.adam_v = VectorXd::Random(pi.params().size()).cwiseAbs();
  ck.adam_t = 1234;
  TempFile f("", ".ckpt");
  save_checkpoint(f.path(), ck);
  const Checkpoint back = load_checkpoint(f.path());
  EXPECT_TRUE(back == ck);
  TempFile g("", ".ckpt");
  save_checkpoint(g.path(), back);
  std::ifstream a(f.path(), std::ios::binary), b(g.path(), std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  const Policy restored = policy_from_checkpoint(back);
  const MatrixXd obs = observations(random_states(rng, 2));
  EXPECT_EQ(restored.forward(obs).mu, pi.forward(obs).mu);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempFile junk("not a checkpoint", ".ckpt");
  EXPECT_THROW(load_checkpoint(junk.path()), ValidationError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), ValidationError);

  const Policy pi(small_config(), 1);
  TempFile f("", ".ckpt");
  save_checkpoint(f.path(), make_checkpoint(pi));
  std::ifstream in(f.path(), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  TempFile cut(bytes.substr(0, bytes.size() - 5), ".ckpt");
  EXPECT_THROW(load_checkpoint(cut.path()), ValidationError);
  TempFile extra(bytes + "x", ".ckpt");
  EXPECT_THROW(load_checkpoint(extra.path()), ValidationError);
}

}  // namespace
}  // namespace egonav
