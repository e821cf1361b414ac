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

// egonav command line: train, eval, crowd, replay, plot.
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>

#include "egonav/checkpoint.hpp"
#include "egonav/config.hpp"
#include "egonav/crowd.hpp"
#include "egonav/metrics.hpp"
#include "egonav/parallel.hpp"
#include "egonav/plot.hpp"
#include "egonav/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace egonav {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open");
  return hash_bytes(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

void write_json(const std::string& path, const json& j) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

std::vector<std::string> scene_files(const std::string& where) {
  std::vector<std::string> out;
  if (fs::is_directory(where)) {
    for (const auto& e : fs::directory_iterator(where)) {
      if (e.path().extension() == ".json") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
  } else if (fs::exists(where)) {
    out.push_back(where);
  }
  if (out.empty()) throw ValidationError(where + ": no scene files");
  return out;
}

int cmd_train(const std::string& config, int stage, const std::string& resume,
              const std::string& init, std::uint64_t seed, const std::string& out_dir) {
  RunConfig cfg = load_run_config(config);
  cfg.plan.stage = stage;
  cfg.master_seed = seed;
  TrainOptions opt;
  opt.threads = thread_count_from_env();
  opt.checkpoint_dir =
      out_dir.empty() ? "runs/stage" + std::to_string(stage) + "_seed" + std::to_string(seed)
                      : out_dir;
  opt.metrics_log = (fs::path(opt.checkpoint_dir) / "metrics.jsonl").string();
  if (!resume.empty()) {
    opt.init = load_checkpoint(resume);
    opt.resume = true;
  } else if (stage == 2) {
    const std::string from = init.empty() ? cfg.plan.init_checkpoint : init;
    if (from.empty()) {
      throw ValidationError("stage 2 needs a stage-1 checkpoint (--init or plan.init_checkpoint)");
    }
    opt.init = load_checkpoint(from);
  }
  opt.on_epoch = [](const EpochRecord& r) {
    std::cout << "stage " << r.stage << " epoch " << r.epoch << "  return " << r.eval_return
              << "  success " << r.eval_success_rate << "  kl " << r.kl_to_prior << "  ("
              << r.seconds << " s)" << std::endl;
  };
  const TrainResult res = train(cfg, opt);
  if (res.selected) {
    std::cout << "selected epoch " << res.selected->epoch << " -> "
              << (fs::path(opt.checkpoint_dir) / "best.ckpt").string()
              << (res.selection_fallback ? " (min-KL fallback)" : "") << '\n';
  } else {
    std::cout << "no epochs run\n";
  }
  return kExitOk;
}

json eval_block(const EvalResult& r, std::span<const Trajectory> ts) {
  json j = metrics_to_json(compute_metrics(ts));
  j["mean_return"] = r.mean_return;
  j["max_pose_score"] = r.max_pose_score;
  j["attention_cos"] = r.mean_attention_cos;
  return j;
}

int cmd_eval(const std::string& ckpt, const std::string& scenes, int episodes,
             const std::string& report, const std::string& config, std::uint64_t seed,
             const std::string& traj_dir, int stage) {
  if (episodes < 1) throw ValidationError("--episodes must be >= 1");
  RunConfig cfg;
  if (!config.empty()) cfg = load_run_config(config);
  cfg.scenes.clear();
  const auto files = scene_files(scenes);
  for (const std::string& f : files) cfg.scenes.push_back(load_scene(f));
  const Checkpoint ck = load_checkpoint(ckpt);
  const Policy policy = policy_from_checkpoint(ck);
  cfg.policy = ck.policy;
  cfg.validate();
  const auto envs = make_envs(cfg);
  const auto tasks = make_tasks(envs, cfg.tasks, episodes, seed, "eval");
  const std::string ck_hash = file_hash(ckpt);

  json out = {{"checkpoint", ckpt}, {"checkpoint_hash", ck_hash}, {"episodes", episodes},
              {"seed", seed}, {"scenes", files}};
  for (const ActionMode mode : {ActionMode::kMean, ActionMode::kSample}) {
    EvalOptions eo;
    eo.stage = static_cast<Stage>(stage);
    eo.mode = mode;
    eo.seed = seed;
    eo.keep_trajectories = true;
    EvalResult r = evaluate(policy, envs, tasks, eo);
    const std::string tag = mode == ActionMode::kMean ? "mean" : "sample";
    for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
      Trajectory& t = r.trajectories[i];
      t.checkpoint = fs::absolute(ckpt).string();
      t.checkpoint_hash = ck_hash;
      t.scene_ref = files[tasks[i].scene];
      t.config_hash = trajectory_hash(t);
      if (!traj_dir.empty()) {
        fs::create_directories(traj_dir);
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%04zu.jsonl", tag.c_str(), i);
        write_trajectory((fs::path(traj_dir) / name).string(), t);
      }
    }
    out[tag] = eval_block(r, r.trajectories);
    if (mode == ActionMode::kMean) {
      json paths = json::array(), goals = json::array(), detail = json::array();
      for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
        const EpisodeSummary& e = r.episodes[i];
        detail.push_back({{"scene", e.task.scene},
                          {"start", {e.task.start.x(), e.task.start.y()}},
                          {"goal", {e.task.goal.x(), e.task.goal.y()}},
                          {"return", e.ret},
                          {"final_distance", e.final_distance},
                          {"success", e.success},
                          {"steps", e.steps},
                          {"termination", termination_name(e.termination)}});
        if (e.task.scene != 0 || paths.size() >= 50) continue;
        json p = json::array();
        for (const Vec2& q : pelvis_path(r.trajectories[i])) p.push_back({q.x(), q.y()});
        paths.push_back(p);
        goals.push_back({e.task.goal.x(), e.task.goal.y()});
      }
      out["scene"] = scene_to_json(cfg.scenes[0]);
      out["paths"] = paths;
      out["goals"] = goals;
      out["episodes_detail"] = detail;
    }
  }
  write_json(report, out);
  std::cout << "mean:   " << out["mean"].dump() << "\nsample: " << out["sample"].dump() << '\n';
  return kExitOk;
}

int cmd_crowd(const std::string& scenario, const std::string& ckpt, const std::string& out) {
  const CrowdScenario sc = load_crowd_scenario(scenario);
  const Policy policy = policy_from_checkpoint(load_checkpoint(ckpt));
  Trajectory t = simulate_crowd(sc, policy);
  t.checkpoint = fs::absolute(ckpt).string();
  t.checkpoint_hash = file_hash(ckpt);
  t.scene_ref = scenario;
  t.config_hash = trajectory_hash(t);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_trajectory(out, t);
  const std::vector<Trajectory> one{t};
  std::cout << metrics_to_json(compute_metrics(one)).dump() << '\n';
  return kExitOk;
}

int cmd_replay(const std::string& traj) {
  const ReplayResult r = replay_file(traj);
  std::cout << (r.match ? "MATCH " : "MISMATCH ") << traj << ": " << r.detail << '\n';
  if (!r.match) {
    std::cout << "first divergent step: " << r.first_divergent_step << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_plot(const std::string& report, const std::string& out) {
  for (const std::string& f : plot_report(report, out)) std::cout << f << '\n';
  return kExitOk;
}

}  // namespace
}  // namespace egonav

int main(int argc, char** argv) {
  using namespace egonav;
  CLI::App app{"egonav: egocentric navigation trainer and crowd simulator"};
  app.require_subcommand(1);

  std::string config, resume, init, out_dir;
  int stage = 1;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "Train one stage");
  train->add_option("--config", config, "Run config (JSON)")->required();
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--init", init, "Stage-1 checkpoint for stage 2");
  train->add_option("--seed", seed, "Master seed")->required();
  train->add_option("--out", out_dir, "Checkpoint directory");

  std::string ckpt, scenes, report, traj_dir;
  int episodes = 100, eval_stage = 2;
  std::uint64_t eval_seed = 0;
  std::string eval_config;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--scenes", scenes, "Scene directory or file")->required();
  eval->add_option("--episodes", episodes)->required();
  eval->add_option("--report", report)->required();
  eval->add_option("--config", eval_config, "Run config for env and task settings");
  eval->add_option("--seed", eval_seed, "Task and action seed");
  eval->add_option("--traj-dir", traj_dir, "Write trajectories here");
  eval->add_option("--stage", eval_stage, "Termination rules")->check(CLI::IsMember({1, 2}));

  std::string scenario, crowd_ckpt, crowd_out;
  auto* crowd = app.add_subcommand("crowd", "Simulate a crowd scenario");
  crowd->add_option("--scenario", scenario)->required();
  crowd->add_option("--ckpt", crowd_ckpt)->required();
  crowd->add_option("--out", crowd_out)->required();

  std::string traj;
  auto* rep = app.add_subcommand("replay", "Regenerate a trajectory and compare");
  rep->add_option("--traj", traj)->required();

  std::string plot_report_path, plot_out;
  auto* plot = app.add_subcommand("plot", "SVG charts from a report or metrics log");
  plot->add_option("--report", plot_report_path)->required();
  plot->add_option("--out", plot_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*train) return cmd_train(config, stage, resume, init, seed, out_dir);
    if (*eval) {
      return cmd_eval(ckpt, scenes, episodes, report, eval_config, eval_seed, traj_dir, eval_stage);
    }
    if (*crowd) return cmd_crowd(scenario, crowd_ckpt, crowd_out);
    if (*rep) return cmd_replay(traj);
    if (*plot) return cmd_plot(plot_report_path, plot_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}
