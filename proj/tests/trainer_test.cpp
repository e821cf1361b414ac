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

#include "egonav/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace egonav {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SceneMap empty_scene(double size = 10.0) {
  SceneMap s;
  s.bounds = {Vec2(0, 0), Vec2(size, size)};
  return s;
}

PolicyConfig tiny_policy() {
  PolicyConfig c;
  c.seed_hidden = 8;
  c.sensing_hidden = 6;
  c.scalar_width = 4;
  c.trunk_width = 12;
  return c;
}

RunConfig tiny_run(std::uint64_t seed = 3) {
  RunConfig c;
  c.master_seed = seed;
  c.scenes = {empty_scene()};
  c.scene_sources = {"inline"};
  c.policy = tiny_policy();
  c.ppo.steps_per_epoch = 96;
  c.ppo.batch_size = 32;
  c.ppo.num_envs = 4;
  c.eval.episodes = 4;
  c.eval.probe_states = 16;
  c.plan.max_epochs = 2;
  return c;
}

std::vector<std::shared_ptr<const Env>> one_env(const EnvConfig& cfg = {}) {
  return {std::make_shared<const Env>(std::make_shared<const SceneContext>(empty_scene()),
                                      std::make_shared<const PrimitiveDecoder>(), cfg)};
}

// Buffer built from explicit episodes; the last step of a non-terminal
// episode is truncated with the given bootstrap.
struct Episode {
  std::vector<double> r, v;
  bool terminal = true;
  double bootstrap = 0.0;
};
RolloutBuffer buffer_of(const std::vector<Episode>& eps) {
  RolloutBuffer b;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    const Episode& ep = eps[e];
    for (std::size_t t = 0; t < ep.r.size(); ++t) {
      const bool last = t + 1 == ep.r.size();
      b.reward.push_back(ep.r[t]);
      b.value.push_back(ep.v[t]);
      b.log_prob.push_back(0.0);
      b.done.push_back(last && ep.terminal);
      b.truncated.push_back(last && !ep.terminal);
      b.bootstrap.push_back(last && !ep.terminal ? ep.bootstrap : 0.0);
      b.episode.push_back(static_cast<std::int64_t>(e));
      b.termination.push_back(last && ep.terminal ? Termination::kTimeout
                                                  : Termination::kRunning);
      b.env_id.push_back(0);
    }
  }
  return b;
}

TEST(Gae, SingleTerminalStep) {
  const Advantages a = gae(buffer_of({{{1.0}, {0.5}, true, 0.0}}), 0.99, 0.95);
  EXPECT_DOUBLE_EQ(a.advantages[0], 0.5);
  EXPECT_DOUBLE_EQ(a.returns[0], 1.0);
}

TEST(Gae, LambdaZeroIsTdResidual) {
  const Episode ep{{1.0, -0.5, 2.0}, {0.3, 0.1, -0.2}, false, 0.7};
  const Advantages a = gae(buffer_of({ep}), 0.9, 0.0);
  EXPECT_DOUBLE_EQ(a.advantages[0], 1.0 + 0.9 * 0.1 - 0.3);
  EXPECT_DOUBLE_EQ(a.advantages[1], -0.5 + 0.9 * -0.2 - 0.1);
  EXPECT_DOUBLE_EQ(a.advantages[2], 2.0 + 0.9 * 0.7 + 0.2);
}

TEST(Gae, MatchesBruteForceOnRandomEpisodes) {
  Rng rng = make_stream(11, "gae_test");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Episode> eps;
    const int n = 1 + static_cast<int>(uniform(rng, 0, 20));
    for (int e = 0; e < n; ++e) {
      Episode ep;
      const int len = 1 + static_cast<int>(uniform(rng, 0, 30));
      for (int t = 0; t < len; ++t) {
        ep.r.push_back(uniform(rng, -2, 2));
        ep.v.push_back(uniform(rng, -2, 2));
      }
      ep.terminal = uniform(rng, 0, 1) < 0.5;
      ep.bootstrap = ep.terminal ? 0.0 : uniform(rng, -2, 2);
      eps.push_back(ep);
    }
    const double gamma = uniform(rng, 0.8, 1.0), lambda = uniform(rng, 0.0, 1.0);
    const Advantages a = gae(buffer_of(eps), gamma, lambda);
    std::size_t k = 0;
    for (const Episode& ep : eps) {
      const auto oracle = oracle::brute_force_gae(ep.r, ep.v, ep.bootstrap, ep.terminal, gamma, lambda);
      for (std::size_t t = 0; t < ep.r.size(); ++t, ++k) {
        ASSERT_NEAR(a.advantages[k], oracle[t], 1e-9);
        ASSERT_NEAR(a.returns[k], oracle[t] + ep.v[t], 1e-9);
      }
    }
  }
}

TEST(Collect, ZeroStepsGivesEmptyBuffer) {
  RolloutCollector c(one_env(), {}, 2, 1);
  const Policy pi(tiny_policy(), 1);
  const RolloutBuffer b = c.collect(pi, Stage::kPretrain, 0, 0);
  EXPECT_EQ(b.size(), 0u);
  EXPECT_EQ(b.num_episodes(), 0);
}

TEST(Collect, TerminationThenTruncatedTail) {
  EnvConfig cfg;
  cfg.max_steps = 5;
  RolloutCollector c(one_env(cfg), {}, 1, 1);
  c.task_override = [](int, std::int64_t, Rng&) {
    return Task{0, Vec2(1, 1), 0.0, Vec2(9, 9)};
  };
  const Policy pi(tiny_policy(), 1);
  const RolloutBuffer b = c.collect(pi, Stage::kPretrain, 8, 0);
  ASSERT_EQ(b.size(), 8u);
  EXPECT_EQ(b.num_episodes(), 2);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(b.episode[i], i < 5 ? 0 : 1);
    EXPECT_EQ(static_cast<bool>(b.done[i]), i == 4);
    EXPECT_EQ(static_cast<bool>(b.truncated[i]), i == 7);
  }
  EXPECT_EQ(b.termination[4], Termination::kTimeout);
  EXPECT_NE(b.bootstrap[7], 0.0);
}

TEST(Collect, EpisodesAreContiguousAndEndFlagged) {
  RolloutCollector c(one_env(), {}, 3, 5);
  const Policy pi(tiny_policy(), 2);
  const RolloutBuffer b = c.collect(pi, Stage::kPretrain, 50, 7);
  ASSERT_EQ(b.size(), 50u);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const bool last = i + 1 == b.size() || b.episode[i + 1] != b.episode[i];
    EXPECT_EQ(last, b.done[i] || b.truncated[i]) << i;
    if (i > 0 && b.episode[i] != b.episode[i - 1]) {
      for (std::size_t j = i; j < b.size(); ++j) ASSERT_NE(b.episode[j], b.episode[i - 1]);
    }
  }
}

TEST(Collect, BitIdenticalAcrossRunsAndThreadCounts) {
  const Policy pi(tiny_policy(), 4);
  RolloutCollector a(one_env(), {}, 4, 9, 1), b(one_env(), {}, 4, 9, 3);
  const RolloutBuffer x = a.collect(pi, Stage::kPretrain, 40, 2);
  const RolloutBuffer y = b.collect(pi, Stage::kPretrain, 40, 2);
  EXPECT_EQ(x.obs, y.obs);
  EXPECT_EQ(x.actions, y.actions);
  EXPECT_EQ(x.reward, y.reward);
  EXPECT_EQ(x.log_prob, y.log_prob);
  EXPECT_EQ(x.episode, y.episode);
  const RolloutBuffer z = a.collect(pi, Stage::kPretrain, 40, 3);
  EXPECT_NE(x.actions, z.actions);
}

TEST(Collect, StageOneCrowdedNeverTerminatesOnPenetration) {
  Rng rng = make_stream(5, "crowded_stage1");
  EnvConfig cfg;
  cfg.mode = SceneMode::kCrowded;
  cfg.body_sample_points = 40;
  std::vector<std::shared_ptr<const Env>> envs;
  for (int k = 0; k < 3; ++k) {
    envs.push_back(std::make_shared<const Env>(
        std::make_shared<const SceneContext>(random_scene(rng, 8)),
        std::make_shared<const PrimitiveDecoder>(), cfg));
  }
  TaskConfig tasks;
  tasks.start_clearance = 0.1;
  tasks.goal_clearance = 0.1;
  RolloutCollector c(envs, tasks, 4, 2);
  const Policy pi(tiny_policy(), 3);
  const RolloutBuffer b = c.collect(pi, Stage::kPretrain, 200, 0);
  for (Termination t : b.termination) EXPECT_NE(t, Termination::kPenetration);
}

// Synthetic minibatch data for the loss tests.
struct LossCase {
  RolloutBuffer buf;
  Advantages adv;
  std::vector<std::size_t> idx;
};
LossCase random_case(const Policy& pi, Rng& rng, int n) {
  LossCase c;
  const auto states = random_states(rng, n);
  const int d = pi.config().latent_dim;
  c.buf.obs.resize(pi.config().obs_dim(), n);
  c.buf.actions.resize(d, n);
  for (int i = 0; i < n; ++i) {
    c.buf.obs.col(i) = make_observation(states[i], {});
    for (int k = 0; k < d; ++k) c.buf.actions(k, i) = standard_normal(rng);
  }
  const PolicyOutput out = pi.forward(c.buf.obs);
  for (int i = 0; i < n; ++i) {
    c.buf.log_prob.push_back(
        gaussian_log_prob(c.buf.actions.col(i), out.mu.col(i), out.log_std) +
        uniform(rng, -0.3, 0.3));
    c.buf.reward.push_back(0.0);
    c.adv.advantages.push_back(uniform(rng, -1, 1));
    c.adv.returns.push_back(uniform(rng, -1, 1));
    c.idx.push_back(static_cast<std::size_t>(i));
  }
  return c;
}

TEST(PpoLoss, UnitRatioGivesZeroSurrogate) {
  const Policy pi(tiny_policy(), 6);
  Rng rng = make_stream(1, "unit_ratio");
  LossCase c = random_case(pi, rng, 20);
  const PolicyOutput out = pi.forward(c.buf.obs);
  for (int i = 0; i < 20; ++i) {
    c.buf.log_prob[i] = gaussian_log_prob(c.buf.actions.col(i), out.mu.col(i), out.log_std);
  }
  const MinibatchLoss L = ppo_loss(pi, c.buf, c.adv, c.idx, PPOConfig{});
  EXPECT_NEAR(L.policy, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(L.clip_fraction, 0.0);
}

TEST(PpoLoss, ClipArithmetic) {
  const Policy pi(tiny_policy(), 6);
  Rng rng = make_stream(2, "clip");
  LossCase c = random_case(pi, rng, 1);
  const PolicyOutput out = pi.forward(c.buf.obs);
  c.buf.log_prob[0] =
      gaussian_log_prob(c.buf.actions.col(0), out.mu.col(0), out.log_std) - std::log(1.5);
  c.adv.advantages[0] = 1.0;
  PPOConfig cfg;
  cfg.advantage_normalization = false;
  const MinibatchLoss L = ppo_loss(pi, c.buf, c.adv, c.idx, cfg);
  EXPECT_NEAR(L.policy, -1.1, 1e-12);
  EXPECT_DOUBLE_EQ(L.clip_fraction, 1.0);
}

TEST(PpoLoss, SurrogateBoundPerSample) {
  Rng rng = make_stream(3, "bound");
  for (int i = 0; i < 10000; ++i) {
    const double rho = std::exp(uniform(rng, -1, 1)), A = uniform(rng, -3, 3);
    const double s = std::min(rho * A, std::clamp(rho, 0.9, 1.1) * A);
    if (A >= 0) {
      ASSERT_LE(s, rho * A);
    } else {
      ASSERT_LE(s, std::clamp(rho, 0.9, 1.1) * A);
    }
  }
}

TEST(PpoLoss, GradientMatchesFiniteDifferences) {
  PolicyConfig pc = tiny_policy();
  pc.latent_dim = 3;
  pc.last_layer_scale = 1.0;
  pc.init_log_std = 0.2;
  Policy pi(pc, 8);
  Rng rng = make_stream(4, "ppo_fd");
  const LossCase c = random_case(pi, rng, 6);
  PPOConfig cfg;
  cfg.clip = 0.25;
  cfg.c2 = 0.05;
  const MinibatchLoss L = ppo_loss(pi, c.buf, c.adv, c.idx, cfg);
  int checked = 0;
  for (Eigen::Index i = 0; i < pi.params().size(); i += 7) {
    const double fd = oracle::central_difference(pi.params(), i, [&] {
      return ppo_loss(pi, c.buf, c.adv, c.idx, cfg).total;
    });
    if (std::abs(fd) < 1e-7 && std::abs(L.grad[i]) < 1e-7) continue;
    EXPECT_LT(oracle::relative_error(L.grad[i], fd), 1e-4) << "param " << i;
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(PpoUpdate, ClipGradNorm) {
  VectorXd g = VectorXd::Constant(100, 1.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 0.1), 10.0);
  EXPECT_LE(g.norm(), 0.1 + 1e-6);
  VectorXd small = VectorXd::Constant(4, 0.01);
  clip_grad_norm(small, 0.1);
  EXPECT_EQ(small, VectorXd::Constant(4, 0.01));
}

TEST(PpoUpdate, NormalizedAdvantageStatistics) {
  Rng rng = make_stream(5, "norm");
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(uniform(rng, 0, 300));
    const double scale = std::exp(uniform(rng, -5, 5));
    std::vector<double> v(n);
    for (double& x : v) x = scale * uniform(rng, -1, 3);
    const auto z = normalize(v);
    double mean = 0, var = 0;
    for (double x : z) mean += x / n;
    for (double x : z) var += (x - mean) * (x - mean) / n;
    ASSERT_LT(std::abs(mean), 1e-6);
    ASSERT_LT(std::abs(std::sqrt(var) - 1.0), 1e-4);
  }
}

TEST(PpoUpdate, OneStepPerMinibatchAndClippedNorm) {
  Policy pi(tiny_policy(), 9);
  Rng rng = make_stream(6, "update");
  LossCase c = random_case(pi, rng, 65);
  PPOConfig cfg;
  cfg.batch_size = 32;
  Adam opt(pi.num_params(), AdamConfig{});
  Rng shuffle = make_stream(6, "shuffle");
  const VectorXd before = pi.params();
  const UpdateReport rep = ppo_update(pi, opt, c.buf, c.adv, cfg, shuffle);
  EXPECT_EQ(rep.minibatches, 2);  // 32 + 32; a single leftover sample is dropped
  EXPECT_EQ(opt.t, 2);
  EXPECT_LE(rep.max_clipped_grad_norm, 0.1 + 1e-6);
  EXPECT_NE(pi.params(), before);
}

TEST(PpoUpdate, NonFiniteLossKeepsParameters) {
  Policy pi(tiny_policy(), 9);
  Rng rng = make_stream(7, "nan");
  LossCase c = random_case(pi, rng, 8);
  c.adv.returns[3] = std::numeric_limits<double>::quiet_NaN();
  PPOConfig cfg;
  cfg.batch_size = 8;
  Adam opt(pi.num_params(), AdamConfig{});
  Rng shuffle = make_stream(7, "shuffle");
  const VectorXd before = pi.params();
  const UpdateReport rep = ppo_update(pi, opt, c.buf, c.adv, cfg, shuffle);
  EXPECT_EQ(rep.skipped, 1);
  EXPECT_EQ(rep.minibatches, 0);
  EXPECT_EQ(pi.params(), before);
}

TEST(KlToPrior, InitialPolicyNearPrior) {
  const Policy pi(PolicyConfig{}, 1);
  Rng rng = make_stream(8, "kl");
  const auto states = random_states(rng, 10);
  MatrixXd obs(PolicyConfig{}.obs_dim(), 10);
  for (int i = 0; i < 10; ++i) obs.col(i) = make_observation(states[i], {});
  const double kl = kl_to_prior(pi, obs);
  EXPECT_GE(kl, 0.0);
  EXPECT_LT(kl, 0.01);
  EXPECT_THROW(kl_to_prior(pi, MatrixXd(obs.rows(), 0)), ValidationError);
}

TEST(SelectCheckpoint, Examples) {
  EXPECT_EQ(select_checkpoint({{0, 3.0, 50.0}}, 8.0).index, 0u);
  const Selection s = select_checkpoint({{0, 10.0, 100.0}, {1, 8.0, 1.0}}, 8.0);
  EXPECT_EQ(s.index, 1u);
  EXPECT_FALSE(s.fallback);
  const Selection f = select_checkpoint({{0, 10.0, 100.0}, {1, 8.0, 20.0}, {2, 9.0, 30.0}}, 8.0);
  EXPECT_EQ(f.index, 1u);
  EXPECT_TRUE(f.fallback);
  EXPECT_EQ(select_checkpoint({{0, 1.0, 1.0}, {1, 5.0, 2.0}, {2, 4.0, 0.5}}, 8.0).index, 1u);
  EXPECT_THROW(select_checkpoint({}, 8.0), ValidationError);
}

TEST(Evaluate, MeanActionsAreDeterministicAndSampledDiffer) {
  const auto envs = one_env();
  const auto tasks = make_tasks(envs, {}, 5, 3, "heldout");
  ASSERT_EQ(tasks.size(), 5u);
  EXPECT_EQ(make_tasks(envs, {}, 5, 3, "heldout")[4].goal, tasks[4].goal);
  const Policy pi(tiny_policy(), 3);
  EvalOptions o;
  o.probe_states = 7;
  const EvalResult a = evaluate(pi, envs, tasks, o), b = evaluate(pi, envs, tasks, o);
  EXPECT_EQ(a.mean_return, b.mean_return);
  EXPECT_EQ(a.probe_obs.cols(), 7);
  o.mode = ActionMode::kSample;
  const EvalResult s = evaluate(pi, envs, tasks, o);
  EXPECT_NE(s.mean_return, a.mean_return);
  for (const EpisodeSummary& e : a.episodes) {
    EXPECT_NE(e.termination, Termination::kRunning);
    EXPECT_EQ(e.success, e.final_distance < 0.3);
  }
}

TEST(Train, ZeroEpochsGivesNoCheckpoints) {
  RunConfig c = tiny_run();
  c.plan.max_epochs = 0;
  const TrainResult r = train(c, {});
  EXPECT_TRUE(r.checkpoints.empty());
  EXPECT_FALSE(r.selected.has_value());
}

TEST(Train, StageTwoRequiresCheckpoint) {
  RunConfig c = tiny_run();
  c.plan.stage = 2;
  EXPECT_THROW(train(c, {}), ValidationError);
}

TEST(Train, DeterministicTracesAndBitExactResume) {
  const RunConfig c = tiny_run();
  const std::string dir =
      (std::filesystem::temp_directory_path() / ("egonav_train_" + std::to_string(::getpid())))
          .string();
  TrainOptions o;
  o.checkpoint_dir = dir;
  o.metrics_log = dir + "/metrics.jsonl";
  const TrainResult a = train(c, o);
  const TrainResult b = train(c, {});
  ASSERT_EQ(a.history.size(), 2u);
  ASSERT_EQ(b.history.size(), 2u);
  for (int e = 0; e < 2; ++e) {
    EXPECT_EQ(a.history[e].eval_return, b.history[e].eval_return);
    EXPECT_EQ(a.history[e].kl_to_prior, b.history[e].kl_to_prior);
    EXPECT_EQ(a.history[e].update.policy_loss, b.history[e].update.policy_loss);
  }
  EXPECT_EQ(a.last, b.last);
  ASSERT_TRUE(a.selected.has_value());
  EXPECT_TRUE(std::filesystem::exists(dir + "/best.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/stage1_epoch0001.ckpt"));

  TrainOptions r;
  r.init = load_checkpoint(dir + "/stage1_epoch0000.ckpt");
  r.resume = true;
  const TrainResult resumed = train(c, r);
  ASSERT_EQ(resumed.history.size(), 1u);
  EXPECT_EQ(resumed.history[0].epoch, 1);
  EXPECT_EQ(resumed.last, a.last);

  RunConfig other = c;
  other.ppo.lr = 1e-3;
  EXPECT_THROW(train(other, r), ValidationError);

  RunConfig stage2 = c;
  stage2.plan.stage = 2;
  stage2.plan.max_epochs = 1;
  TrainOptions s2;
  s2.init = a.last;
  const TrainResult fin = train(stage2, s2);
  EXPECT_EQ(fin.last.stage, 2);
  std::filesystem::remove_all(dir);
}

TEST(Config, DefaultsUnknownKeysAndHash) {
  const std::string scene = R"({"bounds": [0, 0, 10, 10]})";
  const RunConfig c = parse_run_config(nlohmann::json::parse(R"({"scenes": [)" + scene + "]}"));
  EXPECT_EQ(c.scenes.size(), 1u);
  EXPECT_EQ(c.ppo.batch_size, 256);
  EXPECT_EQ(c.ppo.steps_per_epoch, 20000);
  EXPECT_DOUBLE_EQ(c.ppo.clip, 0.1);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"scenes": [)" + scene +
                                                      R"(], "ppo": {"lrr": 1}})")),
               ValidationError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"scenes": [)" + scene +
                                                      R"(], "ppo": {"clip": 1.5}})")),
               ValidationError);
  const RunConfig back = parse_run_config(run_config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  RunConfig d = c;
  d.plan.init_checkpoint = "x.ckpt";
  d.plan.max_epochs = 5;
  EXPECT_EQ(config_hash(d), config_hash(c));
  d.ppo.lr = 1e-3;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(TrajectoryIo, RoundTripIsBitExact) {
  const auto envs = one_env();
  const auto tasks = make_tasks(envs, {}, 2, 4, "traj");
  const Policy pi(tiny_policy(), 3);
  EvalOptions o;
  o.keep_trajectories = true;
  o.mode = ActionMode::kSample;
  o.seed = 12;
  const EvalResult r = evaluate(pi, envs, tasks, o);
  TempFile f("", ".jsonl");
  write_trajectory(f.path(), r.trajectories[1]);
  const Trajectory t = read_trajectory(f.path());
  EXPECT_EQ(t.config_hash, r.trajectories[1].config_hash);
  EXPECT_EQ(trajectory_hash(t), t.config_hash);
  ASSERT_EQ(t.steps.size(), r.trajectories[1].steps.size());
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    std::string why;
    EXPECT_TRUE(same_step(t.steps[i], r.trajectories[1].steps[i], &why)) << why;
  }
  std::ofstream(f.path(), std::ios::app) << "{not json\n";
  try {
    read_trajectory(f.path());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(":" + std::to_string(t.steps.size() + 2)),
              std::string::npos)
        << e.what();
  }
}

}  // namespace
}  // namespace egonav
