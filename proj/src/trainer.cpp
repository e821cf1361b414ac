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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "egonav/parallel.hpp"

namespace egonav {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double clearance(const SceneContext& scene, const Vec2& p) {
  return scene.signed_distance(p, scene.dynamic_boxes_at(0.0));
}

std::uint64_t stream_tag(int stage, int epoch) {
  return (static_cast<std::uint64_t>(stage) << 32) | static_cast<std::uint32_t>(epoch);
}

}  // namespace

Task sample_task(const SceneContext& scene, int scene_index, const TaskConfig& cfg, Rng& rng) {
  const Box2& b = scene.scene().bounds;
  for (int attempt = 0; attempt < 2000; ++attempt) {
    const Vec2 start(uniform(rng, b.min.x(), b.max.x()), uniform(rng, b.min.y(), b.max.y()));
    if (!scene.walkable(start, 0.0) || clearance(scene, start) < cfg.start_clearance) continue;
    for (int g = 0; g < 50; ++g) {
      const double dist = uniform(rng, cfg.min_goal_distance, cfg.max_goal_distance);
      const double ang = uniform(rng, -kPi, kPi);
      const Vec2 goal = start + dist * Vec2(std::cos(ang), std::sin(ang));
      if (!b.contains(goal) || !scene.walkable(goal, 0.0) ||
          clearance(scene, goal) < cfg.goal_clearance) {
        continue;
      }
      return {scene_index, start, uniform(rng, -kPi, kPi), goal};
    }
  }
  throw std::runtime_error("sample_task: no valid start/goal pair in scene " +
                           std::to_string(scene_index));
}

int RolloutBuffer::num_episodes() const {
  int n = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (i == 0 || episode[i] != episode[i - 1]) ++n;
  }
  return n;
}

RolloutCollector::RolloutCollector(std::vector<std::shared_ptr<const Env>> envs,
                                   TaskConfig tasks, int num_workers,
                                   std::uint64_t master_seed, int threads)
    : envs_(std::move(envs)),
      tasks_(tasks),
      workers_(num_workers),
      seed_(master_seed),
      threads_(threads) {
  if (envs_.empty()) throw ValidationError("collector: no environments");
  if (workers_ < 1) throw ValidationError("collector: need at least one worker");
}

RolloutBuffer RolloutCollector::collect(const Policy& policy, Stage stage,
                                        std::int64_t n_steps, std::uint64_t tag) {
  struct Record {
    VectorXd obs, action;
    double log_prob, reward, value;
    bool done;
    Termination term;
    std::int64_t episode;
  };
  struct Worker {
    Rng task_rng, action_rng;
    int env = 0;
    EnvState state;
    std::int64_t episode = -1;
    std::vector<Record> records;
  };
  const int W = workers_;
  std::vector<Worker> ws(W);
  auto new_episode = [&](int w) {
    Worker& k = ws[w];
    ++k.episode;
    Task t;
    if (task_override) {
      t = task_override(w, k.episode, k.task_rng);
    } else {
      const int idx = std::min(static_cast<int>(envs_.size()) - 1,
                               static_cast<int>(uniform(k.task_rng, 0.0, static_cast<double>(envs_.size()))));
      t = sample_task(envs_[idx]->scene(), idx, tasks_, k.task_rng);
    }
    k.env = t.scene;
    k.state = envs_[k.env]->reset(t.start, t.heading, t.goal);
  };
  for (int w = 0; w < W; ++w) {
    ws[w].task_rng = make_stream(seed_, "task", tag, static_cast<std::uint64_t>(w));
    ws[w].action_rng = make_stream(seed_, "action", tag, static_cast<std::uint64_t>(w));
  }
  if (n_steps > 0) {
    for (int w = 0; w < W; ++w) new_episode(w);
  }
  const EnvConfig& ecfg = envs_.front()->config();
  const int obs_dim = policy.config().obs_dim();

  std::int64_t remaining = n_steps;
  while (remaining > 0) {
    const int active = static_cast<int>(std::min<std::int64_t>(W, remaining));
    MatrixXd obs(obs_dim, active);
    for (int w = 0; w < active; ++w) obs.col(w) = make_observation(ws[w].state, ecfg);
    const PolicyOutput out = policy.forward(obs);
    std::vector<ActionSample> acts(active);
    for (int w = 0; w < active; ++w) {
      acts[w] = sample_action(out.mu.col(w), out.log_std, ws[w].action_rng);
    }
    std::vector<StepResult> res(active);
    parallel_for(active, threads_, [&](int w) {
      try {
        res[w] = envs_[ws[w].env]->step(ws[w].state, acts[w].a, stage);
      } catch (const std::exception& e) {
        throw std::runtime_error("env worker " + std::to_string(w) + ": " + e.what());
      }
    });
    for (int w = 0; w < active; ++w) {
      const bool done = res[w].state.termination != Termination::kRunning;
      ws[w].records.push_back({obs.col(w), acts[w].a, acts[w].log_prob, res[w].reward.total,
                               out.value[w], done, res[w].state.termination, ws[w].episode});
      if (done) {
        new_episode(w);
      } else {
        ws[w].state = std::move(res[w].state);
      }
    }
    remaining -= active;
  }

  // Bootstrap values for workers whose episode was cut off.
  std::vector<int> cut;
  for (int w = 0; w < W; ++w) {
    if (!ws[w].records.empty() && !ws[w].records.back().done) cut.push_back(w);
  }
  std::vector<double> boot(W, 0.0);
  if (!cut.empty()) {
    MatrixXd obs(obs_dim, static_cast<Eigen::Index>(cut.size()));
    for (std::size_t i = 0; i < cut.size(); ++i) {
      obs.col(static_cast<Eigen::Index>(i)) = make_observation(ws[cut[i]].state, ecfg);
    }
    const PolicyOutput out = policy.forward(obs);
    for (std::size_t i = 0; i < cut.size(); ++i) boot[cut[i]] = out.value[static_cast<Eigen::Index>(i)];
  }

  RolloutBuffer buf;
  const auto n = static_cast<Eigen::Index>(n_steps);
  buf.obs.resize(obs_dim, n);
  buf.actions.resize(policy.config().latent_dim, n);
  Eigen::Index col = 0;
  for (int w = 0; w < W; ++w) {
    for (std::size_t i = 0; i < ws[w].records.size(); ++i) {
      const Record& r = ws[w].records[i];
      const bool last = i + 1 == ws[w].records.size();
      buf.obs.col(col) = r.obs;
      buf.actions.col(col) = r.action;
      buf.log_prob.push_back(r.log_prob);
      buf.reward.push_back(r.reward);
      buf.value.push_back(r.value);
      buf.done.push_back(r.done);
      buf.truncated.push_back(last && !r.done);
      buf.bootstrap.push_back(last && !r.done ? boot[w] : 0.0);
      buf.episode.push_back((static_cast<std::int64_t>(w) << 32) | r.episode);
      buf.termination.push_back(r.term);
      buf.env_id.push_back(w);
      ++col;
    }
  }
  return buf;
}

Advantages gae(const RolloutBuffer& buf, double gamma, double lambda) {
  const std::size_t n = buf.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    const bool episode_end =
        buf.done[k] || buf.truncated[k] || k + 1 == n || buf.episode[k + 1] != buf.episode[k];
    double next_value = 0.0, next_adv = 0.0;
    if (!episode_end) {
      next_value = buf.value[k + 1];
      next_adv = out.advantages[k + 1];
    } else if (!buf.done[k]) {
      next_value = buf.bootstrap[k];
    }
    const double delta = buf.reward[k] + gamma * next_value - buf.value[k];
    out.advantages[k] = delta + gamma * lambda * next_adv;
    out.returns[k] = out.advantages[k] + buf.value[k];
  }
  return out;
}

std::vector<double> normalize(const std::vector<double>& v) {
  if (v.empty()) return v;
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / (sd + 1e-8);
  return out;
}

double clip_grad_norm(VectorXd& g, double max_norm) {
  const double norm = g.norm();
  if (norm > max_norm) g *= max_norm / (norm + 1e-6);
  return norm;
}

MinibatchLoss ppo_loss(const Policy& policy, const RolloutBuffer& buf, const Advantages& adv,
                       const std::vector<std::size_t>& idx, const PPOConfig& cfg) {
  const int B = static_cast<int>(idx.size());
  const int d = policy.config().latent_dim;
  MatrixXd obs(buf.obs.rows(), B), act(d, B);
  std::vector<double> A(B), R(B);
  for (int i = 0; i < B; ++i) {
    obs.col(i) = buf.obs.col(static_cast<Eigen::Index>(idx[i]));
    act.col(i) = buf.actions.col(static_cast<Eigen::Index>(idx[i]));
    A[i] = adv.advantages[idx[i]];
    R[i] = adv.returns[idx[i]];
  }
  if (cfg.advantage_normalization) A = normalize(A);

  Policy::Cache cache;
  const PolicyOutput out = policy.forward(obs, cache);
  const VectorXd inv_var = (-2.0 * out.log_std.array()).exp();
  MatrixXd d_mu(d, B);
  VectorXd d_v(B);
  VectorXd d_ls = VectorXd::Zero(d);

  MinibatchLoss L;
  for (int i = 0; i < B; ++i) {
    const VectorXd diff = act.col(i) - out.mu.col(i);
    const double logp = gaussian_log_prob(act.col(i), out.mu.col(i), out.log_std);
    const double old = buf.log_prob[idx[i]];
    const double ratio = std::exp(logp - old);
    const double s1 = ratio * A[i];
    const double s2 = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * A[i];
    L.policy -= std::min(s1, s2) / B;
    const double g_logp = s1 <= s2 ? -ratio * A[i] / B : 0.0;
    d_mu.col(i) = g_logp * (diff.array() * inv_var.array()).matrix();
    d_ls += g_logp * ((diff.array().square() * inv_var.array()) - 1.0).matrix();
    const double verr = out.value[i] - R[i];
    L.value += verr * verr / B;
    d_v[i] = cfg.c1 * 2.0 * verr / B;
    L.approx_kl += (old - logp) / B;
    if (std::abs(ratio - 1.0) > cfg.clip) L.clip_fraction += 1.0 / B;
  }
  L.entropy = gaussian_entropy(out.log_std);
  d_ls.array() -= cfg.c2;
  L.total = L.policy + cfg.c1 * L.value - cfg.c2 * L.entropy;
  L.grad = VectorXd::Zero(static_cast<Eigen::Index>(policy.num_params()));
  if (std::isfinite(L.total)) policy.backward(cache, d_mu, d_v, d_ls, L.grad);
  return L;
}

UpdateReport ppo_update(Policy& policy, Adam& opt, const RolloutBuffer& buf,
                        const Advantages& adv, const PPOConfig& cfg, Rng& shuffle) {
  UpdateReport rep;
  const std::size_t n = buf.size();
  std::vector<std::size_t> order(n);
  for (int pass = 0; pass < cfg.repeat_per_collect; ++pass) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.batch_size));
      if (hi - lo < 2) continue;
      const std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
      MinibatchLoss L = ppo_loss(policy, buf, adv, idx, cfg);
      if (!std::isfinite(L.total) || !L.grad.allFinite()) {
        ++rep.skipped;
        std::cerr << "ppo_update: non-finite loss in minibatch " << rep.minibatches + rep.skipped
                  << " (policy " << L.policy << ", value " << L.value << ", entropy "
                  << L.entropy << "); parameters kept\n";
        continue;
      }
      const double norm = clip_grad_norm(L.grad, cfg.max_grad_norm);
      rep.max_clipped_grad_norm = std::max(rep.max_clipped_grad_norm, L.grad.norm());
      opt.step(policy.params(), L.grad);
      ++rep.minibatches;
      rep.policy_loss += L.policy;
      rep.value_loss += L.value;
      rep.entropy += L.entropy;
      rep.approx_kl += L.approx_kl;
      rep.clip_fraction += L.clip_fraction;
      rep.grad_norm += norm;
    }
  }
  if (rep.minibatches > 0) {
    const double m = rep.minibatches;
    rep.policy_loss /= m;
    rep.value_loss /= m;
    rep.entropy /= m;
    rep.approx_kl /= m;
    rep.clip_fraction /= m;
    rep.grad_norm /= m;
  }
  return rep;
}

std::vector<Task> make_tasks(const std::vector<std::shared_ptr<const Env>>& envs,
                             const TaskConfig& cfg, int count, std::uint64_t seed,
                             const std::string& purpose) {
  Rng rng = make_stream(seed, purpose);
  std::vector<Task> out;
  for (int i = 0; i < count; ++i) {
    const int idx = std::min(static_cast<int>(envs.size()) - 1,
                             static_cast<int>(uniform(rng, 0.0, static_cast<double>(envs.size()))));
    out.push_back(sample_task(envs[idx]->scene(), idx, cfg, rng));
  }
  return out;
}

EvalResult evaluate(const Policy& policy, const std::vector<std::shared_ptr<const Env>>& envs,
                    const std::vector<Task>& tasks, const EvalOptions& opt) {
  const int n = static_cast<int>(tasks.size());
  if (n == 0) throw ValidationError("evaluate: no tasks");
  struct Episode {
    EnvState state;
    Rng rng;
    EpisodeSummary sum;
    double cos_sum = 0.0;
  };
  std::vector<Episode> eps(n);
  EvalResult res;
  if (opt.keep_trajectories) res.trajectories.resize(n);
  for (int i = 0; i < n; ++i) {
    const Task& t = tasks[i];
    const Env& env = *envs.at(t.scene);
    eps[i].state = env.reset(t.start, t.heading, t.goal);
    eps[i].rng = make_stream(opt.seed, "eval_action", static_cast<std::uint64_t>(i));
    eps[i].sum.task = t;
    if (opt.keep_trajectories) {
      Trajectory& tr = res.trajectories[i];
      tr.master_seed = opt.seed;
      tr.episode = i;
      tr.mode = opt.mode;
      tr.stage = opt.stage;
      tr.scene = env.scene().scene();
      tr.env = env.config();
      tr.decoder = env.decoder().config();
      tr.agents.push_back({t.start, t.heading, t.goal, eps[i].state.attention_target});
    }
  }
  const int obs_dim = policy.config().obs_dim();
  std::vector<VectorXd> probes;
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);
  while (!active.empty()) {
    const int m = static_cast<int>(active.size());
    MatrixXd obs(obs_dim, m);
    for (int j = 0; j < m; ++j) {
      const Episode& e = eps[active[j]];
      obs.col(j) = make_observation(e.state, envs[e.sum.task.scene]->config());
      if (static_cast<int>(probes.size()) < opt.probe_states) probes.push_back(obs.col(j));
    }
    // One column at a time so a replay of a single episode is bit-exact.
    std::vector<VectorXd> acts(m);
    for (int j = 0; j < m; ++j) {
      const PolicyOutput out = policy.forward(obs.col(j));
      acts[j] = opt.mode == ActionMode::kMean
                    ? VectorXd(out.mu.col(0))
                    : sample_action(out.mu.col(0), out.log_std, eps[active[j]].rng).a;
    }
    std::vector<StepResult> res_step(m);
    parallel_for(m, 1, [&](int j) {
      const Episode& e = eps[active[j]];
      res_step[j] = envs[e.sum.task.scene]->step(e.state, acts[j], opt.stage);
    });
    std::vector<int> next;
    for (int j = 0; j < m; ++j) {
      const int i = active[j];
      Episode& e = eps[i];
      const StepResult& r = res_step[j];
      if (opt.keep_trajectories) {
        StepRecord rec;
        rec.step = e.sum.steps;
        rec.time = e.state.time;
        rec.action = acts[j];
        rec.frames = r.primitive.frames;
        rec.reward = r.reward;
        rec.goal_distance = r.state.goal_distance;
        rec.termination = r.state.termination;
        res.trajectories[i].steps.push_back(std::move(rec));
      }
      e.sum.ret += r.reward.total;
      e.sum.max_pose_score = std::max(e.sum.max_pose_score, r.reward.pose_score);
      e.cos_sum += r.reward.attention_cos;
      ++e.sum.steps;
      e.state = r.state;
      if (e.state.termination != Termination::kRunning) {
        e.sum.termination = e.state.termination;
        e.sum.final_distance = e.state.goal_distance;
        e.sum.success = e.state.goal_distance < envs[e.sum.task.scene]->config().success_eval_thres;
        e.sum.mean_attention_cos = e.cos_sum / e.sum.steps;
      } else {
        next.push_back(i);
      }
    }
    active = std::move(next);
  }
  res.probe_obs.resize(obs_dim, static_cast<Eigen::Index>(probes.size()));
  for (std::size_t i = 0; i < probes.size(); ++i) res.probe_obs.col(static_cast<Eigen::Index>(i)) = probes[i];
  for (const Episode& e : eps) {
    res.episodes.push_back(e.sum);
    res.mean_return += e.sum.ret / n;
    res.success_rate += (e.sum.success ? 1.0 : 0.0) / n;
    res.mean_final_distance += e.sum.final_distance / n;
    res.max_pose_score = std::max(res.max_pose_score, e.sum.max_pose_score);
    res.mean_attention_cos += e.sum.mean_attention_cos / n;
  }
  if (opt.keep_trajectories) {
    for (Trajectory& t : res.trajectories) t.config_hash = trajectory_hash(t);
  }
  return res;
}

double kl_to_prior(const Policy& policy, const MatrixXd& probe_obs) {
  if (probe_obs.cols() == 0) throw ValidationError("kl_to_prior: no probe states");
  const PolicyOutput out = policy.forward(probe_obs);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < out.mu.cols(); ++i) {
    kl += kl_to_standard_normal(out.mu.col(i), out.log_std);
  }
  return kl / static_cast<double>(out.mu.cols());
}

Selection select_checkpoint(const std::vector<CheckpointSummary>& cks, double kappa) {
  if (cks.empty()) throw ValidationError("select_checkpoint: no checkpoints");
  Selection sel;
  bool found = false;
  for (std::size_t i = 0; i < cks.size(); ++i) {
    if (cks[i].kl_to_prior <= kappa &&
        (!found || cks[i].eval_reward > cks[sel.index].eval_reward)) {
      sel.index = i;
      found = true;
    }
  }
  if (found) return sel;
  sel.fallback = true;
  for (std::size_t i = 1; i < cks.size(); ++i) {
    if (cks[i].kl_to_prior < cks[sel.index].kl_to_prior) sel.index = i;
  }
  return sel;
}

std::vector<std::shared_ptr<const Env>> make_envs(const RunConfig& cfg) {
  auto dec = std::make_shared<const PrimitiveDecoder>(cfg.decoder);
  std::vector<std::shared_ptr<const Env>> envs;
  for (const SceneMap& s : cfg.scenes) {
    envs.push_back(std::make_shared<const Env>(std::make_shared<const SceneContext>(s), dec, cfg.env));
  }
  return envs;
}

nlohmann::json epoch_record_to_json(const EpochRecord& r) {
  return {{"stage", r.stage},
          {"epoch", r.epoch},
          {"total_steps", r.total_steps},
          {"train_return", r.train_return},
          {"eval_return", r.eval_return},
          {"eval_success_rate", r.eval_success_rate},
          {"eval_max_pose_score", r.eval_max_pose_score},
          {"eval_attention_cos", r.eval_attention_cos},
          {"kl_to_prior", r.kl_to_prior},
          {"penetration_terminations", r.penetration_terminations},
          {"policy_loss", r.update.policy_loss},
          {"value_loss", r.update.value_loss},
          {"entropy", r.update.entropy},
          {"approx_kl", r.update.approx_kl},
          {"clip_fraction", r.update.clip_fraction},
          {"grad_norm", r.update.grad_norm},
          {"minibatches", r.update.minibatches},
          {"skipped", r.update.skipped},
          {"seconds", r.seconds}};
}

TrainResult train(const RunConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  const Stage stage = static_cast<Stage>(cfg.plan.stage);
  const std::string hash = config_hash(cfg);
  if (stage == Stage::kFinetune && !opt.init) {
    throw ValidationError("stage 2 requires a stage-1 checkpoint");
  }
  const auto envs = make_envs(cfg);
  Policy policy(cfg.policy, cfg.master_seed);
  Adam adam(policy.num_params(), AdamConfig{cfg.ppo.lr});
  int first_epoch = 0;
  std::int64_t total_steps = 0;
  if (opt.init) {
    const Checkpoint& ck = *opt.init;
    if (!(ck.policy == cfg.policy)) {
      throw ValidationError("checkpoint policy config does not match the run config");
    }
    policy.params() = ck.params;
    if (opt.resume) {
      if (ck.config_hash != hash) {
        throw ValidationError("resume: checkpoint config hash " + ck.config_hash +
                              " does not match run config hash " + hash);
      }
      if (ck.has_optimizer) {
        adam.m = ck.adam_m;
        adam.v = ck.adam_v;
        adam.t = ck.adam_t;
      }
      first_epoch = ck.epoch + 1;
      total_steps = ck.total_steps;
    } else if (stage == Stage::kFinetune && ck.stage != 1) {
      throw ValidationError("stage 2 must start from a stage-1 checkpoint");
    }
  }

  const std::vector<Task> heldout =
      make_tasks(envs, cfg.tasks, cfg.eval.episodes, cfg.master_seed, "heldout");
  RolloutCollector collector(envs, cfg.tasks, cfg.ppo.num_envs, cfg.master_seed, opt.threads);
  const double kappa = cfg.eval.kappa(cfg.policy.latent_dim);

  if (!opt.checkpoint_dir.empty()) std::filesystem::create_directories(opt.checkpoint_dir);
  std::ofstream log;
  if (!opt.metrics_log.empty()) {
    log.open(opt.metrics_log, opt.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error(opt.metrics_log + ": cannot open metrics log");
  }

  TrainResult result;
  std::optional<Checkpoint> best_gated, min_kl;
  auto snapshot = [&](int epoch, const EvalResult& ev, double kl) {
    Checkpoint ck = make_checkpoint(policy);
    ck.config_hash = hash;
    ck.master_seed = cfg.master_seed;
    ck.stage = cfg.plan.stage;
    ck.epoch = epoch;
    ck.total_steps = total_steps;
    ck.eval_reward = ev.mean_return;
    ck.eval_success_rate = ev.success_rate;
    ck.kl_to_prior = kl;
    ck.has_optimizer = true;
    ck.adam_m = adam.m;
    ck.adam_v = adam.v;
    ck.adam_t = adam.t;
    return ck;
  };

  for (int epoch = first_epoch; epoch < cfg.plan.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const RolloutBuffer buf =
        collector.collect(policy, stage, cfg.ppo.steps_per_epoch, stream_tag(cfg.plan.stage, epoch));
    total_steps += static_cast<std::int64_t>(buf.size());
    EpochRecord rec;
    rec.stage = cfg.plan.stage;
    rec.epoch = epoch;
    rec.total_steps = total_steps;
    double ret = 0.0;
    int finished = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      acc += buf.reward[i];
      if (buf.termination[i] == Termination::kPenetration) ++rec.penetration_terminations;
      const bool end = buf.done[i] || buf.truncated[i];
      if (end) {
        if (buf.done[i]) {
          ret += acc;
          ++finished;
        }
        acc = 0.0;
      }
    }
    rec.train_return = finished > 0 ? ret / finished : 0.0;

    const Advantages adv = gae(buf, cfg.ppo.gamma, cfg.ppo.gae_lambda);
    Rng shuffle = make_stream(cfg.master_seed, "shuffle", stream_tag(cfg.plan.stage, epoch));
    rec.update = ppo_update(policy, adam, buf, adv, cfg.ppo, shuffle);

    EvalOptions eo;
    eo.stage = stage;
    eo.probe_states = cfg.eval.probe_states;
    const EvalResult ev = evaluate(policy, envs, heldout, eo);
    const double kl = kl_to_prior(policy, ev.probe_obs);
    rec.eval_return = ev.mean_return;
    rec.eval_success_rate = ev.success_rate;
    rec.eval_max_pose_score = ev.max_pose_score;
    rec.eval_attention_cos = ev.mean_attention_cos;
    rec.kl_to_prior = kl;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    result.checkpoints.push_back({epoch, ev.mean_return, kl});
    Checkpoint ck = snapshot(epoch, ev, kl);
    if (kl <= kappa && (!best_gated || ev.mean_return > best_gated->eval_reward)) best_gated = ck;
    if (!min_kl || kl < min_kl->kl_to_prior) min_kl = ck;
    if (!opt.checkpoint_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "stage%d_epoch%04d.ckpt", cfg.plan.stage, epoch);
      save_checkpoint((std::filesystem::path(opt.checkpoint_dir) / name).string(), ck);
      save_checkpoint((std::filesystem::path(opt.checkpoint_dir) / "last.ckpt").string(), ck);
    }
    result.last = std::move(ck);
    result.history.push_back(rec);
    if (log) log << epoch_record_to_json(rec).dump() << std::endl;
    if (opt.on_epoch) opt.on_epoch(rec);

    if (cfg.eval.target_success_rate >= 0 && ev.success_rate >= cfg.eval.target_success_rate) {
      result.converged = true;
      break;
    }
    const int n = static_cast<int>(result.checkpoints.size());
    if (n > cfg.plan.patience) {
      double before = -std::numeric_limits<double>::infinity(), now = before;
      for (int i = 0; i < n; ++i) {
        now = std::max(now, result.checkpoints[i].eval_reward);
        if (i < n - cfg.plan.patience) before = now;
      }
      if (now - before < cfg.plan.min_improvement * std::abs(before)) {
        result.converged = true;
        break;
      }
    }
  }

  if (!result.checkpoints.empty()) {
    const Selection sel = select_checkpoint(result.checkpoints, kappa);
    result.selection_fallback = sel.fallback;
    result.selected = sel.fallback ? min_kl : best_gated;
    if (sel.fallback) {
      std::cerr << "warning: no checkpoint has KL to the prior <= " << kappa
                << "; selected the minimum-KL checkpoint (epoch " << result.selected->epoch << ")\n";
    }
    if (!opt.checkpoint_dir.empty()) {
      save_checkpoint((std::filesystem::path(opt.checkpoint_dir) / "best.ckpt").string(),
                      *result.selected);
    }
  }
  return result;
}

}  // namespace egonav
