// Copyright 2026 The Keylock Authors.
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "keylock/attack/attacks.hpp"
#include "keylock/net/arch.hpp"
#include "keylock/nn/sgd.hpp"

namespace keylock::harness {

struct DataConfig {
  std::string source = "cifar10";  // "cifar10" or "synthetic"
  std::string dir;                 // empty: KEYLOCK_DATA_DIR
  std::size_t train_size = 5000;
  std::size_t test_size = 1000;
  bool stratified = true;
};

struct ProtectionConfig {
  std::vector<std::string> placements = {"initial_conv"};
  std::size_t block_size = 2;
  std::string key_file;  // relative paths resolve against the config file
};

struct TrainConfig {
  nn::SgdHyper hyper;
  bool augment = true;
};

struct EvalConfig {
  std::size_t wrong_keys = 20;
  std::size_t batch_size = 256;
};

struct KeyEstimationConfig {
  bool enabled = false;
  std::vector<std::string> placements;  // empty: the protected ones
  std::size_t attacker_size = 1000;     // |D'|
  std::size_t eval_size = 0;            // scoring rows; 0 = all of D'
  bool full_trace = true;
};

struct FinetuneConfig {
  bool enabled = false;
  std::vector<std::size_t> sizes = {100, 500, 1000};
  std::size_t epochs = 30;
  attack::FinetuneTransform transform = attack::FinetuneTransform::bypass;
  bool trajectory = true;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t init = 2;
  std::uint64_t wrong_keys = 3;
  std::uint64_t attacker = 4;
};

/// Everything one experiment needs. Round-trips through JSON.
struct ExperimentConfig {
  net::ArchConfig arch;
  ProtectionConfig protection;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  KeyEstimationConfig key_estimation;
  FinetuneConfig finetune;
  Seeds seeds;
  std::string checkpoint;  // optional pretrained model to start from
  std::string out = "runs/experiment";

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing fields take defaults; unknown fields are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Compact JSON dump of the config without the output directory; this is
/// the text that gets hashed and echoed into reports.
std::string canonical_text(const ExperimentConfig& config);
/// Lowercase hex SHA-256 of canonical_text().
std::string config_hash(const ExperimentConfig& config);

/// Lowercase hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace keylock::harness
