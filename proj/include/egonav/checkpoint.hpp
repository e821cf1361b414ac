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

// Checkpoint files.
//
//   "EGONAVCK" | u32 version | u64 header length | JSON header | payload
//
// The header holds metadata, the policy config and the tensor table (name,
// rows, cols). The payload is the raw little-endian parameter vector followed
// by the optimizer moments when present, so a load/save cycle is bit-exact.

#ifndef EGONAV_CHECKPOINT_HPP_
#define EGONAV_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "egonav/policy.hpp"

namespace egonav {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PolicyConfig policy;
  Eigen::VectorXd params;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  int stage = 1;
  int epoch = 0;
  std::int64_t total_steps = 0;
  double eval_reward = 0.0;
  double eval_success_rate = 0.0;
  double kl_to_prior = 0.0;
  bool has_optimizer = false;
  Eigen::VectorXd adam_m, adam_v;
  std::int64_t adam_t = 0;

  bool operator==(const Checkpoint& o) const;
};

nlohmann::json policy_config_to_json(const PolicyConfig& c);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

Checkpoint make_checkpoint(const Policy& policy);
Policy policy_from_checkpoint(const Checkpoint& ck);

// Throws std::runtime_error on I/O failure and ValidationError on a malformed
// or truncated file.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace egonav

#endif  // EGONAV_CHECKPOINT_HPP_
