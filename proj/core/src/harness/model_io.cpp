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

#include "keylock/harness/model_io.hpp"

#include <fstream>

#include "keylock/errors.hpp"
#include "keylock/nn/checkpoint.hpp"

namespace keylock::harness {

using nlohmann::json;

json to_json(const ModelManifest& m) {
  const json cfg = to_json([&] {
    ExperimentConfig c;
    c.arch = m.arch;
    c.data = m.data;
    c.seeds = m.seeds;
    return c;
  }());
  return json{{"format", "keylock.model/1"},
              {"arch", cfg.at("arch")},
              {"placements", m.placements},
              {"block_size", m.block_size},
              {"key_fingerprint", m.key_fingerprint},
              {"normalization",
               {{"mean", m.normalization.mean}, {"std", m.normalization.stddev}}},
              {"data", cfg.at("data")},
              {"seeds", cfg.at("seeds")}};
}

ModelManifest manifest_from_json(const json& j) {
  if (j.value("format", std::string()) != "keylock.model/1") {
    throw FormatError("not a keylock model manifest");
  }
  const ExperimentConfig c = config_from_json(
      json{{"arch", j.at("arch")}, {"data", j.at("data")}, {"seeds", j.at("seeds")},
           {"protection", {{"placements", json::array()}}}});
  ModelManifest m;
  m.arch = c.arch;
  m.data = c.data;
  m.seeds = c.seeds;
  m.placements = j.at("placements").get<std::vector<std::string>>();
  m.block_size = j.at("block_size").get<std::size_t>();
  m.key_fingerprint = j.at("key_fingerprint").get<std::string>();
  m.normalization.mean = j.at("normalization").at("mean").get<std::vector<float>>();
  m.normalization.stddev = j.at("normalization").at("std").get<std::vector<float>>();
  return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".json");
  return p;
}

void save_model(const std::filesystem::path& checkpoint, const net::ProtectedModel& model,
                const ModelManifest& manifest, const nn::Sgd<float>* optimizer) {
  nn::Checkpoint ckpt;
  nn::Network<float> copy = model.network();
  nn::store_network(ckpt, copy);
  if (optimizer != nullptr) nn::store_velocity(ckpt, *optimizer);
  if (checkpoint.has_parent_path()) std::filesystem::create_directories(checkpoint.parent_path());
  nn::write_checkpoint(checkpoint, ckpt);
  std::ofstream out(manifest_path(checkpoint));
  out << to_json(manifest).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + manifest_path(checkpoint).string());
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const auto mpath = manifest_path(checkpoint);
  std::ifstream in(mpath);
  if (!in) throw std::runtime_error("cannot open model manifest " + mpath.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  ModelManifest manifest = manifest_from_json(j);
  LoadedModel loaded{net::ProtectedModel::build(manifest.arch, 0), std::move(manifest)};
  nn::load_network(nn::read_checkpoint(checkpoint), loaded.model.network());
  if (!loaded.manifest.placements.empty()) {
    loaded.model.mark_protected(loaded.manifest.placements, loaded.manifest.block_size);
  }
  return loaded;
}

void bind_checked(LoadedModel& loaded, const shuffle::SecretKey& key) {
  if (loaded.manifest.placements.empty()) throw ConfigError("model is not protected");
  if (key.fingerprint() != loaded.manifest.key_fingerprint) {
    throw ConfigError("key fingerprint " + key.fingerprint() +
                      " does not match the model's " + loaded.manifest.key_fingerprint);
  }
  loaded.model.bind_key(key);
}

data::Dataset ExperimentData::attacker_subset(std::size_t size, std::uint64_t seed) const {
  data::Dataset d = data::sample_subset(pool, size, seed, true);
  normalization.apply(d);
  d.split = "attacker";
  return d;
}

ExperimentData prepare_data(const DataConfig& config, const Seeds& seeds, std::size_t pool_min,
                            const std::optional<data::Normalization>& normalization) {
  ExperimentData out;
  data::Dataset test_full;
  if (config.source == "cifar10") {
    std::filesystem::path dir = config.dir;
    if (dir.empty()) {
      const auto env = data::default_data_dir();
      if (!env) throw ConfigError("CIFAR-10 directory not given and KEYLOCK_DATA_DIR unset");
      dir = *env;
    }
    auto [train, test] = data::load_cifar10(dir);
    out.pool = std::move(train);
    test_full = std::move(test);
  } else {
    const std::size_t pool_size = std::max(config.train_size, pool_min);
    out.pool = data::synthetic_dataset(pool_size, 10, seeds.data * 2 + 1, "train");
    test_full = data::synthetic_dataset(config.test_size, 10, seeds.data * 2 + 2, "test");
  }
  out.train = data::sample_subset(out.pool, config.train_size, seeds.data, config.stratified);
  out.test = data::sample_subset(test_full, config.test_size, seeds.data + 1, config.stratified);
  out.normalization = normalization ? *normalization : data::Normalization::fit(out.train);
  out.normalization.apply(out.train);
  out.normalization.apply(out.test);
  return out;
}

}  // namespace keylock::harness
