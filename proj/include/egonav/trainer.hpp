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

// PPO with GAE over a pool of environments, two-stage training and
// checkpoint selection.

#ifndef EGONAV_TRAINER_HPP_
#define EGONAV_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "egonav/checkpoint.hpp"
#include "egonav/config.hpp"
#include "egonav/env.hpp"
#include "egonav/policy.hpp"
#include "egonav/trajectory.hpp"

namespace egonav {

// ---- tasks -----------------------------------------------------------------

struct Task {
  int scene = 0;
  Vec2 start = Vec2::Zero();
  double heading = 0.0;
  Vec2 goal = Vec2::Zero();
};

// Draws a start with clearance, a uniform heading and a goal at a distance in
// [min_goal_distance, max_goal_distance]. Throws std::runtime_error when no
// task is found after many attempts.
Task sample_task(const SceneContext& scene, int scene_index, const TaskConfig& cfg,
                 Rng& rng);

// ---- rollouts --------------------------------------------------------------

struct RolloutBuffer {
  Eigen::MatrixXd obs;      // obs_dim x n
  Eigen::MatrixXd actions;  // d x n
  std::vector<double> log_prob, reward, value;
  std::vector<std::uint8_t> done;       // terminal transition
  std::vector<std::uint8_t> truncated;  // episode cut by the step budget
  std::vector<double> bootstrap;        // V(s') for truncated steps, else 0
  std::vector<std::int64_t> episode;
  std::vector<Termination> termination;
  std::vector<int> env_id;

  std::size_t size() const { return reward.size(); }
  int num_episodes() const;
};

// A pool of environments stepping in lockstep against one policy snapshot.
class RolloutCollector {
 public:
  RolloutCollector(std::vector<std::shared_ptr<const Env>> envs, TaskConfig tasks,
                   int num_workers, std::uint64_t master_seed, int threads = 1);

  // Exactly n_steps transitions; every worker starts a fresh episode at the
  // beginning of a collect. `tag` separates the random streams of calls.
  RolloutBuffer collect(const Policy& policy, Stage stage, std::int64_t n_steps,
                        std::uint64_t tag);

  // Overrides task sampling (tests).
  std::function<Task(int worker, std::int64_t episode, Rng&)> task_override;

 private:
  std::vector<std::shared_ptr<const Env>> envs_;
  TaskConfig tasks_;
  int workers_;
  std::uint64_t seed_;
  int threads_;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};
Advantages gae(const RolloutBuffer& buf, double gamma, double lambda);

struct UpdateReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;  // before clipping, mean over minibatches
  double max_clipped_grad_norm = 0.0;
  int minibatches = 0;
  int skipped = 0;  // minibatches dropped for a non-finite loss
};

// Per-minibatch PPO loss and gradient. Exposed for tests.
struct MinibatchLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  Eigen::VectorXd grad;
};
MinibatchLoss ppo_loss(const Policy& policy, const RolloutBuffer& buf,
                       const Advantages& adv, const std::vector<std::size_t>& idx,
                       const PPOConfig& cfg);

// Normalized copy (population std) of `v`.
std::vector<double> normalize(const std::vector<double>& v);

// Scales `g` to global norm at most max_norm; returns the norm before.
double clip_grad_norm(Eigen::VectorXd& g, double max_norm);

UpdateReport ppo_update(Policy& policy, Adam& opt, const RolloutBuffer& buf,
                        const Advantages& adv, const PPOConfig& cfg, Rng& shuffle);

// ---- evaluation ------------------------------------------------------------

struct EpisodeSummary {
  Task task;
  double ret = 0.0;
  double final_distance = 0.0;
  bool success = false;  // final distance below the evaluation threshold
  Termination termination = Termination::kRunning;
  int steps = 0;
  double max_pose_score = 0.0;
  double mean_attention_cos = 0.0;
};

struct EvalResult {
  std::vector<EpisodeSummary> episodes;
  std::vector<Trajectory> trajectories;  // filled when requested
  Eigen::MatrixXd probe_obs;             // states visited, up to probe_states
  double mean_return = 0.0;
  double success_rate = 0.0;  // fraction in [0, 1]
  double mean_final_distance = 0.0;
  double max_pose_score = 0.0;
  double mean_attention_cos = 0.0;
};

struct EvalOptions {
  Stage stage = Stage::kFinetune;
  ActionMode mode = ActionMode::kMean;
  std::uint64_t seed = 0;  // action stream seed in sample mode
  int probe_states = 0;
  bool keep_trajectories = false;
};

EvalResult evaluate(const Policy& policy, const std::vector<std::shared_ptr<const Env>>& envs,
                    const std::vector<Task>& tasks, const EvalOptions& opt);

// Deterministic held-out task list.
std::vector<Task> make_tasks(const std::vector<std::shared_ptr<const Env>>& envs,
                             const TaskConfig& cfg, int count, std::uint64_t seed,
                             const std::string& purpose);

// Mean KL(pi(.|s) || N(0, I)) over the columns of `probe_obs`.
double kl_to_prior(const Policy& policy, const Eigen::MatrixXd& probe_obs);

// ---- checkpoint selection ----------------------------------------------------

struct CheckpointSummary {
  int epoch = 0;
  double eval_reward = 0.0;
  double kl_to_prior = 0.0;
};
struct Selection {
  std::size_t index = 0;
  bool fallback = false;  // no checkpoint passed the KL gate
};
// Max eval reward among kl <= kappa; otherwise the min-KL checkpoint.
Selection select_checkpoint(const std::vector<CheckpointSummary>& cks, double kappa);

// ---- training ----------------------------------------------------------------

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  std::int64_t total_steps = 0;
  double train_return = 0.0;  // mean return of episodes finished in the rollout
  double eval_return = 0.0;
  double eval_success_rate = 0.0;
  double eval_max_pose_score = 0.0;
  double eval_attention_cos = 0.0;
  double kl_to_prior = 0.0;
  UpdateReport update;
  double seconds = 0.0;
  int penetration_terminations = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<CheckpointSummary> checkpoints;
  std::optional<Checkpoint> selected;
  Checkpoint last;
  bool selection_fallback = false;
  bool converged = false;
};

struct TrainOptions {
  std::optional<Checkpoint> init;    // stage-II start or resume point
  bool resume = false;               // continue epochs and optimizer state
  std::string metrics_log;           // JSONL path, empty for none
  std::string checkpoint_dir;        // per-epoch checkpoints, empty for none
  std::function<void(const EpochRecord&)> on_epoch;
  int threads = 1;
};

// Runs the configured stage. Stage II requires `init`.
TrainResult train(const RunConfig& cfg, const TrainOptions& opt);

nlohmann::json epoch_record_to_json(const EpochRecord& r);

// Environments of a run config, one per scene, sharing the decoder.
std::vector<std::shared_ptr<const Env>> make_envs(const RunConfig& cfg);

}  // namespace egonav

#endif  // EGONAV_TRAINER_HPP_
