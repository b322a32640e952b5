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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "keylock/data/dataset.hpp"
#include "keylock/harness/config.hpp"
#include "keylock/net/protected_model.hpp"
#include "keylock/nn/sgd.hpp"

namespace keylock::harness {

/// Sidecar JSON written next to a checkpoint. Holds everything needed to
/// rebuild the model and its data pipeline, plus the key fingerprint. The
/// key seed itself is never written.
struct ModelManifest {
  net::ArchConfig arch;
  std::vector<std::string> placements;
  std::size_t block_size = 0;
  std::string key_fingerprint;  // empty when unprotected
  data::Normalization normalization;
  DataConfig data;
  Seeds seeds;
};

nlohmann::json to_json(const ModelManifest& manifest);
ModelManifest manifest_from_json(const nlohmann::json& j);

/// "<ckpt without extension>.json".
std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

struct LoadedModel {
  net::ProtectedModel model;  // protected placements marked, key unbound
  ModelManifest manifest;
};

/// Writes the checkpoint and its manifest. Velocities are stored when an
/// optimizer is given.
void save_model(const std::filesystem::path& checkpoint, const net::ProtectedModel& model,
                const ModelManifest& manifest, const nn::Sgd<float>* optimizer = nullptr);

LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Binds `key` after checking its fingerprint against the manifest. Throws
/// ConfigError on a mismatch.
void bind_checked(LoadedModel& loaded, const shuffle::SecretKey& key);

/// The train/test split an experiment runs on, normalized with constants
/// fitted on the training subset, plus the raw training pool attacker sets
/// are drawn from.
struct ExperimentData {
  data::Dataset train;
  data::Dataset test;
  data::Dataset pool;  // unnormalized
  data::Normalization normalization;

  /// Stratified draw of `size` rows from the pool, normalized.
  data::Dataset attacker_subset(std::size_t size, std::uint64_t seed) const;
};

/// Loads CIFAR-10 (or generates the synthetic stand-in) and samples the
/// configured subsets under seeds.data. With `normalization` given, it is
/// used instead of being fitted.
ExperimentData prepare_data(const DataConfig& config, const Seeds& seeds,
                            std::size_t pool_min = 0,
                            const std::optional<data::Normalization>& normalization = {});

}  // namespace keylock::harness
