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

// Actor-critic network with hand-written reverse mode.
//
//   seed frames  --GRU(128)--+
//   sensing rows --GRU(64)----+--> tanh(256) --> tanh(256) --+--> mu, log_std
//   (d, d/10, tau) --PE--> affine(32) --/                    \--> V
//
// All parameters live in one flat vector; `layout()` names the blocks.
// Batches are column-major: one sample per column.

#ifndef EGONAV_POLICY_HPP_
#define EGONAV_POLICY_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "egonav/env.hpp"
#include "egonav/rng.hpp"

namespace egonav {

struct PolicyConfig {
  int latent_dim = 16;
  int num_rays = 32;
  int seed_hidden = 128;
  int sensing_hidden = 64;
  int pe_bands = 4;
  int scalar_width = 32;
  int trunk_width = 256;
  double last_layer_scale = 0.01;
  double init_log_std = 0.0;

  void validate() const;

  static constexpr int kScalars = 3;  // d, min(d / 10, 1), tau / max_steps
  int seed_step_dim() const { return 2 * kNumMarkers * 3; }
  // [seed steps | sensing rows | d | tau / max_steps]
  int obs_dim() const { return kSeedFrames * (seed_step_dim() + num_rays) + 2; }
  int concat_dim() const { return seed_hidden + sensing_hidden + scalar_width; }

  bool operator==(const PolicyConfig&) const = default;
};

// [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]
Eigen::VectorXd positional_encoding(double x, int bands);

// Canonicalized policy input of one state. Sensing is divided by the range.
Eigen::VectorXd make_observation(const EnvState& s, const EnvConfig& env);

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

struct PolicyOutput {
  Eigen::MatrixXd mu;       // d x B
  Eigen::VectorXd value;    // B
  Eigen::VectorXd log_std;  // d
  Eigen::MatrixXd features; // trunk_width x B
};

class Policy {
 public:
  struct Cache;

  Policy(PolicyConfig cfg, std::uint64_t init_seed);

  const PolicyConfig& config() const { return cfg_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  const ParamBlock& block(const std::string& name) const;
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  // Throws ValidationError on a dimension mismatch and std::runtime_error
  // naming the node where a non-finite value first appears.
  PolicyOutput forward(const Eigen::MatrixXd& obs) const;
  PolicyOutput forward(const Eigen::MatrixXd& obs, Cache& cache) const;

  // Adds dL/dparams to `grad` given dL/dmu (d x B), dL/dV (B) and dL/dlog_std.
  void backward(const Cache& cache, const Eigen::MatrixXd& d_mu,
                const Eigen::VectorXd& d_value, const Eigen::VectorXd& d_log_std,
                Eigen::VectorXd& grad) const;

 private:
  Eigen::Map<const Eigen::MatrixXd> view(const ParamBlock& b) const;
  void add_block(const std::string& name, int rows, int cols);

  PolicyConfig cfg_;
  std::vector<ParamBlock> layout_;
  Eigen::VectorXd params_;
};

struct GruStepCache {
  Eigen::MatrixXd x, h, r, z, n, hn;
};

struct Policy::Cache {
  std::vector<GruStepCache> seed_steps;
  std::vector<GruStepCache> sensing_steps;
  Eigen::MatrixXd pe;      // PE of the scalars
  Eigen::MatrixXd concat;  // [h_seed; h_sensing; scalar features]
  Eigen::MatrixXd t1, t2;
};

// Diagonal Gaussian helpers.
struct ActionSample {
  Eigen::VectorXd a;
  double log_prob = 0.0;
};
ActionSample sample_action(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_std,
                           Rng& rng);
double gaussian_log_prob(const Eigen::VectorXd& a, const Eigen::VectorXd& mu,
                         const Eigen::VectorXd& log_std);
double gaussian_entropy(const Eigen::VectorXd& log_std);
// KL(N(mu, sigma^2) || N(0, I)).
double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_std);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  Eigen::VectorXd m, v;
  std::int64_t t = 0;

 private:
  AdamConfig cfg_;
};

}  // namespace egonav

#endif  // EGONAV_POLICY_HPP_
