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

#include "egonav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace egonav {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order");

constexpr char kMagic[8] = {'E', 'G', 'O', 'N', 'A', 'V', 'C', 'K'};

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& path) {
  T v;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ValidationError(path + ": truncated checkpoint");
  }
  return v;
}

void put_vector(std::ofstream& f, const Eigen::VectorXd& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd get_vector(std::ifstream& f, std::size_t n, const std::string& path) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  if (!f.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(n * sizeof(double)))) {
    throw ValidationError(path + ": truncated checkpoint payload");
  }
  return v;
}

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  return policy == o.policy && same_bits(params, o.params) &&
         config_hash == o.config_hash && master_seed == o.master_seed &&
         stage == o.stage && epoch == o.epoch && total_steps == o.total_steps &&
         std::bit_cast<std::uint64_t>(eval_reward) == std::bit_cast<std::uint64_t>(o.eval_reward) &&
         std::bit_cast<std::uint64_t>(eval_success_rate) ==
             std::bit_cast<std::uint64_t>(o.eval_success_rate) &&
         std::bit_cast<std::uint64_t>(kl_to_prior) == std::bit_cast<std::uint64_t>(o.kl_to_prior) &&
         has_optimizer == o.has_optimizer && same_bits(adam_m, o.adam_m) &&
         same_bits(adam_v, o.adam_v) && adam_t == o.adam_t;
}

nlohmann::json policy_config_to_json(const PolicyConfig& c) {
  return {{"latent_dim", c.latent_dim},         {"num_rays", c.num_rays},
          {"seed_hidden", c.seed_hidden},       {"sensing_hidden", c.sensing_hidden},
          {"pe_bands", c.pe_bands},             {"scalar_width", c.scalar_width},
          {"trunk_width", c.trunk_width},       {"last_layer_scale", c.last_layer_scale},
          {"init_log_std", c.init_log_std}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.num_rays = j.value("num_rays", c.num_rays);
  c.seed_hidden = j.value("seed_hidden", c.seed_hidden);
  c.sensing_hidden = j.value("sensing_hidden", c.sensing_hidden);
  c.pe_bands = j.value("pe_bands", c.pe_bands);
  c.scalar_width = j.value("scalar_width", c.scalar_width);
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.last_layer_scale = j.value("last_layer_scale", c.last_layer_scale);
  c.init_log_std = j.value("init_log_std", c.init_log_std);
  c.validate();
  return c;
}

Checkpoint make_checkpoint(const Policy& policy) {
  Checkpoint ck;
  ck.policy = policy.config();
  ck.params = policy.params();
  return ck;
}

Policy policy_from_checkpoint(const Checkpoint& ck) {
  Policy p(ck.policy, 0);
  if (static_cast<std::size_t>(ck.params.size()) != p.num_params()) {
    throw ValidationError("checkpoint: parameter count does not match the policy config");
  }
  p.params() = ck.params;
  return p;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const Policy shape(ck.policy, 0);
  if (static_cast<std::size_t>(ck.params.size()) != shape.num_params()) {
    throw ValidationError("checkpoint: parameter count does not match the policy config");
  }
  nlohmann::json tensors = nlohmann::json::array();
  for (const ParamBlock& b : shape.layout()) {
    tensors.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  const nlohmann::json header = {
      {"config_hash", ck.config_hash},
      {"master_seed", ck.master_seed},
      {"stage", ck.stage},
      {"epoch", ck.epoch},
      {"total_steps", ck.total_steps},
      {"eval_reward", ck.eval_reward},
      {"eval_success_rate", ck.eval_success_rate},
      {"kl_to_prior", ck.kl_to_prior},
      {"policy", policy_config_to_json(ck.policy)},
      {"tensors", tensors},
      {"num_params", shape.num_params()},
      {"optimizer", ck.has_optimizer},
      {"adam_t", ck.adam_t},
  };
  const std::string text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(kMagic, sizeof(kMagic));
    put(f, kCheckpointVersion);
    put(f, static_cast<std::uint64_t>(text.size()));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_vector(f, ck.params);
    if (ck.has_optimizer) {
      put_vector(f, ck.adam_m);
      put_vector(f, ck.adam_v);
    }
    if (!f) throw std::runtime_error(path + ": write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error(path + ": cannot move checkpoint into place");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError(path + ": cannot open checkpoint");
  char magic[8];
  if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError(path + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(f, path);
  if (version != kCheckpointVersion) {
    throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = get<std::uint64_t>(f, path);
  if (len > (1u << 24)) throw ValidationError(path + ": corrupt header length");
  std::string text(len, '\0');
  if (!f.read(text.data(), static_cast<std::streamsize>(len))) {
    throw ValidationError(path + ": truncated checkpoint header");
  }
  Checkpoint ck;
  try {
    const nlohmann::json h = nlohmann::json::parse(text);
    ck.config_hash = h.at("config_hash").get<std::string>();
    ck.master_seed = h.at("master_seed").get<std::uint64_t>();
    ck.stage = h.at("stage").get<int>();
    ck.epoch = h.at("epoch").get<int>();
    ck.total_steps = h.at("total_steps").get<std::int64_t>();
    ck.eval_reward = h.at("eval_reward").get<double>();
    ck.eval_success_rate = h.at("eval_success_rate").get<double>();
    ck.kl_to_prior = h.at("kl_to_prior").get<double>();
    ck.policy = policy_config_from_json(h.at("policy"));
    ck.has_optimizer = h.at("optimizer").get<bool>();
    ck.adam_t = h.at("adam_t").get<std::int64_t>();
    const Policy shape(ck.policy, 0);
    const auto& tensors = h.at("tensors");
    if (tensors.size() != shape.layout().size()) {
      throw ValidationError(path + ": tensor table does not match the policy config");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const ParamBlock& b = shape.layout()[i];
      if (tensors[i].at("name") != b.name || tensors[i].at("rows") != b.rows ||
          tensors[i].at("cols") != b.cols) {
        throw ValidationError(path + ": tensor " + b.name + " has the wrong shape");
      }
    }
    ck.params = get_vector(f, shape.num_params(), path);
    if (ck.has_optimizer) {
      ck.adam_m = get_vector(f, shape.num_params(), path);
      ck.adam_v = get_vector(f, shape.num_params(), path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": bad checkpoint header: " + e.what());
  }
  if (f.peek() != std::char_traits<char>::eof()) {
    throw ValidationError(path + ": trailing bytes after checkpoint payload");
  }
  return ck;
}

}  // namespace egonav
