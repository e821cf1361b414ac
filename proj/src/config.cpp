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

#include "egonav/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "egonav/checkpoint.hpp"
#include "egonav/rng.hpp"

namespace egonav {
namespace {

using nlohmann::json;

class Fields {
 public:
  Fields(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw ValidationError(ctx_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(ctx_ + "." + key + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ValidationError(ctx_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

void PPOConfig::validate() const {
  require(lr > 0, "ppo.lr: must be positive");
  require(gamma > 0 && gamma <= 1, "ppo.gamma: must be in (0, 1]");
  require(clip > 0 && clip < 1, "ppo.clip: must be in (0, 1)");
  require(repeat_per_collect >= 1, "ppo.repeat_per_collect: must be >= 1");
  require(c1 >= 0 && c2 >= 0, "ppo.c1, ppo.c2: must be non-negative");
  require(gae_lambda >= 0 && gae_lambda <= 1, "ppo.gae_lambda: must be in [0, 1]");
  require(max_grad_norm > 0, "ppo.max_grad_norm: must be positive");
  require(batch_size >= 2, "ppo.batch_size: must be >= 2");
  require(steps_per_epoch >= 1, "ppo.steps_per_epoch: must be >= 1");
  require(!value_clipping, "ppo.value_clipping: only false is supported");
  require(num_envs >= 1, "ppo.num_envs: must be >= 1");
}

void TaskConfig::validate() const {
  require(min_goal_distance > 0 && max_goal_distance >= min_goal_distance,
          "tasks: need 0 < min_goal_distance <= max_goal_distance");
  require(start_clearance >= 0 && goal_clearance >= 0, "tasks: clearances must be >= 0");
}

void StagePlan::validate() const {
  require(stage == 1 || stage == 2, "plan.stage: must be 1 or 2");
  require(max_epochs >= 0, "plan.max_epochs: must be >= 0");
  require(patience >= 1, "plan.patience: must be >= 1");
  require(min_improvement >= 0, "plan.min_improvement: must be >= 0");
}

void EvalConfig::validate() const {
  require(episodes >= 1, "eval.episodes: must be >= 1");
  require(probe_states >= 1, "eval.probe_states: must be >= 1");
}

void RunConfig::validate() const {
  require(!scenes.empty(), "scenes: at least one scene is required");
  for (const SceneMap& s : scenes) s.validate();
  env.validate();
  policy.validate();
  require(policy.latent_dim == decoder.latent_dim,
          "policy.latent_dim must equal decoder.latent_dim");
  require(policy.num_rays == env.sensing.num_rays,
          "policy.num_rays must equal env.sensing.num_rays");
  ppo.validate();
  tasks.validate();
  plan.validate();
  eval.validate();
}

json env_config_to_json(const EnvConfig& c) {
  const RewardWeights& w = c.weights;
  return {
      {"max_steps", c.max_steps},
      {"success_reward_thres", c.success_reward_thres},
      {"success_eval_thres", c.success_eval_thres},
      {"mode", c.mode == SceneMode::kSparse ? "sparse" : "crowded"},
      {"body_sample_points", c.body_sample_points},
      {"pene_term_fraction", c.pene_term_fraction},
      {"attention_form", c.attention_form == AttentionForm::kNormalized ? "normalized" : "cosine"},
      {"weights",
       {{"floor", w.floor}, {"skate", w.skate}, {"dist", w.dist}, {"ori", w.ori},
        {"attention", w.attention}, {"pene_pretrain", w.pene_pretrain},
        {"pene_finetune", w.pene_finetune}, {"pose", w.pose}, {"succ", w.succ}}},
      {"sensing",
       {{"num_rays", c.sensing.num_rays}, {"fov_min_deg", c.sensing.fov_min_deg},
        {"fov_max_deg", c.sensing.fov_max_deg}, {"range", c.sensing.range}}},
  };
}

EnvConfig env_config_from_json(const json& j) {
  EnvConfig c;
  Fields f(j, "env");
  f.get("max_steps", c.max_steps);
  f.get("success_reward_thres", c.success_reward_thres);
  f.get("success_eval_thres", c.success_eval_thres);
  std::string mode = "sparse", form = "normalized";
  f.get("mode", mode);
  require(mode == "sparse" || mode == "crowded", "env.mode: must be sparse or crowded");
  c.mode = mode == "sparse" ? SceneMode::kSparse : SceneMode::kCrowded;
  f.get("body_sample_points", c.body_sample_points);
  f.get("pene_term_fraction", c.pene_term_fraction);
  f.get("attention_form", form);
  require(form == "normalized" || form == "cosine",
          "env.attention_form: must be normalized or cosine");
  c.attention_form = form == "normalized" ? AttentionForm::kNormalized : AttentionForm::kCosine;
  if (const json* w = f.sub("weights")) {
    Fields g(*w, "env.weights");
    g.get("floor", c.weights.floor);
    g.get("skate", c.weights.skate);
    g.get("dist", c.weights.dist);
    g.get("ori", c.weights.ori);
    g.get("attention", c.weights.attention);
    g.get("pene_pretrain", c.weights.pene_pretrain);
    g.get("pene_finetune", c.weights.pene_finetune);
    g.get("pose", c.weights.pose);
    g.get("succ", c.weights.succ);
    g.finish();
  }
  if (const json* s = f.sub("sensing")) {
    Fields g(*s, "env.sensing");
    g.get("num_rays", c.sensing.num_rays);
    g.get("fov_min_deg", c.sensing.fov_min_deg);
    g.get("fov_max_deg", c.sensing.fov_max_deg);
    g.get("range", c.sensing.range);
    g.finish();
  }
  f.finish();
  c.validate();
  return c;
}

json decoder_config_to_json(const DecoderConfig& c) {
  return {{"latent_dim", c.latent_dim},     {"speed_gain", c.speed_gain},
          {"max_speed", c.max_speed},       {"turn_gain", c.turn_gain},
          {"max_turn_rate", c.max_turn_rate}, {"yaw_gain", c.yaw_gain},
          {"max_head_yaw", c.max_head_yaw}, {"pitch_gain", c.pitch_gain},
          {"max_head_pitch", c.max_head_pitch}, {"step_length", c.step_length},
          {"swing_height", c.swing_height}, {"sway_amplitude", c.sway_amplitude},
          {"jitter_amplitude", c.jitter_amplitude},
          {"projection_seed", c.projection_seed}, {"pose_beta", c.pose_beta},
          {"pose_gamma", c.pose_gamma},     {"pose_kappa", c.pose_kappa}};
}

DecoderConfig decoder_config_from_json(const json& j) {
  DecoderConfig c;
  Fields f(j, "decoder");
  f.get("latent_dim", c.latent_dim);
  f.get("speed_gain", c.speed_gain);
  f.get("max_speed", c.max_speed);
  f.get("turn_gain", c.turn_gain);
  f.get("max_turn_rate", c.max_turn_rate);
  f.get("yaw_gain", c.yaw_gain);
  f.get("max_head_yaw", c.max_head_yaw);
  f.get("pitch_gain", c.pitch_gain);
  f.get("max_head_pitch", c.max_head_pitch);
  f.get("step_length", c.step_length);
  f.get("swing_height", c.swing_height);
  f.get("sway_amplitude", c.sway_amplitude);
  f.get("jitter_amplitude", c.jitter_amplitude);
  f.get("projection_seed", c.projection_seed);
  f.get("pose_beta", c.pose_beta);
  f.get("pose_gamma", c.pose_gamma);
  f.get("pose_kappa", c.pose_kappa);
  f.finish();
  require(c.latent_dim >= 5, "decoder.latent_dim: must be >= 5");
  return c;
}

json ppo_config_to_json(const PPOConfig& c) {
  return {{"lr", c.lr},
          {"gamma", c.gamma},
          {"clip", c.clip},
          {"repeat_per_collect", c.repeat_per_collect},
          {"c1", c.c1},
          {"c2", c.c2},
          {"gae_lambda", c.gae_lambda},
          {"max_grad_norm", c.max_grad_norm},
          {"batch_size", c.batch_size},
          {"steps_per_epoch", c.steps_per_epoch},
          {"advantage_normalization", c.advantage_normalization},
          {"value_clipping", c.value_clipping},
          {"num_envs", c.num_envs}};
}

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  RunConfig c;
  Fields f(j, "config");
  f.get("master_seed", c.master_seed);
  if (const json* scenes = f.sub("scenes")) {
    require(scenes->is_array(), "config.scenes: expected an array");
    for (const json& s : *scenes) {
      if (s.is_string()) {
        std::filesystem::path p = s.get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        c.scenes.push_back(load_scene(p.string()));
        c.scene_sources.push_back(p.string());
      } else {
        c.scenes.push_back(parse_scene(s));
        c.scene_sources.push_back("inline");
      }
    }
  }
  if (const json* e = f.sub("env")) c.env = env_config_from_json(*e);
  if (const json* d = f.sub("decoder")) c.decoder = decoder_config_from_json(*d);
  if (const json* p = f.sub("policy")) c.policy = policy_config_from_json(*p);
  if (const json* p = f.sub("ppo")) {
    Fields g(*p, "ppo");
    g.get("lr", c.ppo.lr);
    g.get("gamma", c.ppo.gamma);
    g.get("clip", c.ppo.clip);
    g.get("repeat_per_collect", c.ppo.repeat_per_collect);
    g.get("c1", c.ppo.c1);
    g.get("c2", c.ppo.c2);
    g.get("gae_lambda", c.ppo.gae_lambda);
    g.get("max_grad_norm", c.ppo.max_grad_norm);
    g.get("batch_size", c.ppo.batch_size);
    g.get("steps_per_epoch", c.ppo.steps_per_epoch);
    g.get("advantage_normalization", c.ppo.advantage_normalization);
    g.get("value_clipping", c.ppo.value_clipping);
    g.get("num_envs", c.ppo.num_envs);
    g.finish();
  }
  if (const json* t = f.sub("tasks")) {
    Fields g(*t, "tasks");
    g.get("min_goal_distance", c.tasks.min_goal_distance);
    g.get("max_goal_distance", c.tasks.max_goal_distance);
    g.get("start_clearance", c.tasks.start_clearance);
    g.get("goal_clearance", c.tasks.goal_clearance);
    g.finish();
  }
  if (const json* p = f.sub("plan")) {
    Fields g(*p, "plan");
    g.get("stage", c.plan.stage);
    g.get("max_epochs", c.plan.max_epochs);
    g.get("patience", c.plan.patience);
    g.get("min_improvement", c.plan.min_improvement);
    g.get("init_checkpoint", c.plan.init_checkpoint);
    g.finish();
    if (!c.plan.init_checkpoint.empty() &&
        std::filesystem::path(c.plan.init_checkpoint).is_relative()) {
      c.plan.init_checkpoint =
          (std::filesystem::path(base_dir) / c.plan.init_checkpoint).string();
    }
  }
  if (const json* e = f.sub("eval")) {
    Fields g(*e, "eval");
    g.get("episodes", c.eval.episodes);
    g.get("probe_states", c.eval.probe_states);
    g.get("kl_gate", c.eval.kl_gate);
    g.get("target_success_rate", c.eval.target_success_rate);
    g.finish();
  }
  f.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  try {
    return parse_run_config(j, std::filesystem::path(path).parent_path().string());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

json run_config_to_json(const RunConfig& c) {
  json scenes = json::array();
  for (const SceneMap& s : c.scenes) scenes.push_back(scene_to_json(s));
  return {
      {"master_seed", c.master_seed},
      {"scenes", scenes},
      {"env", env_config_to_json(c.env)},
      {"decoder", decoder_config_to_json(c.decoder)},
      {"policy", policy_config_to_json(c.policy)},
      {"ppo", ppo_config_to_json(c.ppo)},
      {"tasks",
       {{"min_goal_distance", c.tasks.min_goal_distance},
        {"max_goal_distance", c.tasks.max_goal_distance},
        {"start_clearance", c.tasks.start_clearance},
        {"goal_clearance", c.tasks.goal_clearance}}},
      {"plan",
       {{"stage", c.plan.stage},
        {"max_epochs", c.plan.max_epochs},
        {"patience", c.plan.patience},
        {"min_improvement", c.plan.min_improvement},
        {"init_checkpoint", c.plan.init_checkpoint}}},
      {"eval",
       {{"episodes", c.eval.episodes},
        {"probe_states", c.eval.probe_states},
        {"kl_gate", c.eval.kl_gate},
        {"target_success_rate", c.eval.target_success_rate}}},
  };
}

std::string hash_bytes(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string hash_json(const json& j) { return hash_bytes(j.dump()); }

std::string config_hash(const RunConfig& c) {
  json j = run_config_to_json(c);
  j["plan"].erase("init_checkpoint");
  j["plan"].erase("max_epochs");
  return hash_json(j);
}

}  // namespace egonav
