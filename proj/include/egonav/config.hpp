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

// Run configuration: JSON form, validation and hashing. Unknown keys are
// rejected. Every field has a default, so "{}" plus a scene list is a valid
// config.

#ifndef EGONAV_CONFIG_HPP_
#define EGONAV_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "egonav/body.hpp"
#include "egonav/env.hpp"
#include "egonav/policy.hpp"
#include "egonav/scene.hpp"

namespace egonav {

struct PPOConfig {
  double lr = 3e-4;
  double gamma = 0.99;
  double clip = 0.1;
  int repeat_per_collect = 1;
  double c1 = 1.0;  // value loss
  double c2 = 0.01; // entropy bonus
  double gae_lambda = 0.95;
  double max_grad_norm = 0.1;
  int batch_size = 256;
  int steps_per_epoch = 20000;
  bool advantage_normalization = true;
  bool value_clipping = false;  // only false is supported
  int num_envs = 16;

  void validate() const;
};

struct TaskConfig {
  double min_goal_distance = 1.0;
  double max_goal_distance = 8.0;
  double start_clearance = 0.4;
  double goal_clearance = 0.3;

  void validate() const;
};

struct StagePlan {
  int stage = 1;
  int max_epochs = 300;
  // Converged when the best eval reward improved by less than
  // min_improvement (relative) over the last `patience` epochs.
  int patience = 10;
  double min_improvement = 0.01;
  std::string init_checkpoint;  // required for stage 2

  void validate() const;
};

struct EvalConfig {
  int episodes = 100;
  int probe_states = 512;
  double kl_gate = -1.0;              // negative: 0.5 * latent_dim
  double target_success_rate = -1.0;  // stop once reached; negative: never

  void validate() const;
  double kappa(int latent_dim) const { return kl_gate < 0 ? 0.5 * latent_dim : kl_gate; }
};

struct RunConfig {
  std::uint64_t master_seed = 0;
  std::vector<SceneMap> scenes;
  std::vector<std::string> scene_sources;  // path or "inline", per scene
  EnvConfig env;
  DecoderConfig decoder;
  PolicyConfig policy;
  PPOConfig ppo;
  TaskConfig tasks;
  StagePlan plan;
  EvalConfig eval;

  void validate() const;
};

nlohmann::json env_config_to_json(const EnvConfig& c);
EnvConfig env_config_from_json(const nlohmann::json& j);
nlohmann::json decoder_config_to_json(const DecoderConfig& c);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);
nlohmann::json ppo_config_to_json(const PPOConfig& c);

// Scene entries may be file paths (relative to base_dir) or inline objects.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);
// Scenes are written inline.
nlohmann::json run_config_to_json(const RunConfig& c);

// 16 hex digits of FNV-1a over the canonical JSON, excluding the
// init_checkpoint path and the epoch budget.
std::string config_hash(const RunConfig& c);
std::string hash_json(const nlohmann::json& j);
std::string hash_bytes(const std::string& bytes);

}  // namespace egonav

#endif  // EGONAV_CONFIG_HPP_
