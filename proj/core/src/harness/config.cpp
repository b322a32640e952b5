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

#include "keylock/harness/config.hpp"

#include <openssl/sha.h>

#include <fstream>
#include <set>

#include "keylock/errors.hpp"

namespace keylock::harness {

using nlohmann::json;

namespace {

// Reads the fields of one JSON object and rejects any it did not ask for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  std::optional<json> sub(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return std::optional<json>(std::in_place, j_.at(key));
  }

  std::string child(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown field " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

void ExperimentConfig::validate() const {
  if (arch.input.size() != 3) throw ConfigError("arch.input must have three extents");
  if (arch.classes < 2) throw ConfigError("arch.classes must be at least 2");
  if (protection.block_size == 0) throw ConfigError("protection.block_size must be positive");
  for (const auto& p : protection.placements) {
    if (std::find(net::kPlacementIds.begin(), net::kPlacementIds.end(), p) ==
        net::kPlacementIds.end()) {
      throw ConfigError("unknown placement '" + p + "'");
    }
  }
  if (!protection.placements.empty() && protection.key_file.empty()) {
    throw ConfigError("protection.key_file is required when placements are set");
  }
  if (train.hyper.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (train.hyper.max_lr < 0) throw ConfigError("train.max_lr must be non-negative");
  if (data.source != "cifar10" && data.source != "synthetic") {
    throw ConfigError("data.source must be cifar10 or synthetic");
  }
  if (data.train_size == 0 || data.test_size == 0) {
    throw ConfigError("data sizes must be positive");
  }
  if (eval.wrong_keys == 0 || eval.wrong_keys > 100) {
    throw ConfigError("eval.wrong_keys must be in [1, 100]");
  }
  if (eval.batch_size == 0) throw ConfigError("eval.batch_size must be positive");
  if (key_estimation.enabled && key_estimation.attacker_size == 0) {
    throw ConfigError("key_estimation.attacker_size must be positive");
  }
  if (finetune.enabled && finetune.sizes.empty()) {
    throw ConfigError("finetune.sizes must not be empty");
  }
  if ((key_estimation.enabled || finetune.enabled) && protection.placements.empty()) {
    throw ConfigError("attacks need a protected model");
  }
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"arch",
       {{"preset", std::string(net::to_string(c.arch.preset))},
        {"input", c.arch.input},
        {"classes", c.arch.classes},
        {"widths", c.arch.widths}}},
      {"protection",
       {{"placements", c.protection.placements},
        {"block_size", c.protection.block_size},
        {"key_file", c.protection.key_file}}},
      {"train",
       {{"epochs", c.train.hyper.epochs},
        {"batch_size", c.train.hyper.batch_size},
        {"momentum", c.train.hyper.momentum},
        {"weight_decay", c.train.hyper.weight_decay},
        {"max_lr", c.train.hyper.max_lr},
        {"augment", c.train.augment}}},
      {"data",
       {{"source", c.data.source},
        {"dir", c.data.dir},
        {"train_size", c.data.train_size},
        {"test_size", c.data.test_size},
        {"stratified", c.data.stratified}}},
      {"eval", {{"wrong_keys", c.eval.wrong_keys}, {"batch_size", c.eval.batch_size}}},
      {"key_estimation",
       {{"enabled", c.key_estimation.enabled},
        {"placements", c.key_estimation.placements},
        {"attacker_size", c.key_estimation.attacker_size},
        {"eval_size", c.key_estimation.eval_size},
        {"trace", c.key_estimation.full_trace ? "full" : "summary"}}},
      {"finetune",
       {{"enabled", c.finetune.enabled},
        {"sizes", c.finetune.sizes},
        {"epochs", c.finetune.epochs},
        {"transform", attack::to_string(c.finetune.transform)},
        {"trajectory", c.finetune.trajectory}}},
      {"seeds",
       {{"data", c.seeds.data},
        {"init", c.seeds.init},
        {"wrong_keys", c.seeds.wrong_keys},
        {"attacker", c.seeds.attacker}}},
      {"checkpoint", c.checkpoint},
      {"out", c.out},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  if (auto s = root.sub("arch")) {
    Section a(*s, root.child("arch"));
    std::string preset = std::string(net::to_string(c.arch.preset));
    a.get("preset", preset);
    const auto defaults = net::ArchConfig::defaults(net::parse_arch(preset));
    c.arch = defaults;
    a.get("input", c.arch.input);
    a.get("classes", c.arch.classes);
    a.get("widths", c.arch.widths);
    a.finish();
  }
  if (auto s = root.sub("protection")) {
    Section p(*s, root.child("protection"));
    p.get("placements", c.protection.placements);
    p.get("block_size", c.protection.block_size);
    p.get("key_file", c.protection.key_file);
    p.finish();
  }
  if (auto s = root.sub("train")) {
    Section t(*s, root.child("train"));
    t.get("epochs", c.train.hyper.epochs);
    t.get("batch_size", c.train.hyper.batch_size);
    t.get("momentum", c.train.hyper.momentum);
    t.get("weight_decay", c.train.hyper.weight_decay);
    t.get("max_lr", c.train.hyper.max_lr);
    t.get("augment", c.train.augment);
    t.finish();
  }
  if (auto s = root.sub("data")) {
    Section d(*s, root.child("data"));
    d.get("source", c.data.source);
    d.get("dir", c.data.dir);
    d.get("train_size", c.data.train_size);
    d.get("test_size", c.data.test_size);
    d.get("stratified", c.data.stratified);
    d.finish();
  }
  if (auto s = root.sub("eval")) {
    Section e(*s, root.child("eval"));
    e.get("wrong_keys", c.eval.wrong_keys);
    e.get("batch_size", c.eval.batch_size);
    e.finish();
  }
  if (auto s = root.sub("key_estimation")) {
    Section k(*s, root.child("key_estimation"));
    k.get("enabled", c.key_estimation.enabled);
    k.get("placements", c.key_estimation.placements);
    k.get("attacker_size", c.key_estimation.attacker_size);
    k.get("eval_size", c.key_estimation.eval_size);
    std::string trace = "full";
    k.get("trace", trace);
    if (trace != "full" && trace != "summary") {
      throw ConfigError("key_estimation.trace must be full or summary");
    }
    c.key_estimation.full_trace = trace == "full";
    k.finish();
  }
  if (auto s = root.sub("finetune")) {
    Section f(*s, root.child("finetune"));
    f.get("enabled", c.finetune.enabled);
    f.get("sizes", c.finetune.sizes);
    f.get("epochs", c.finetune.epochs);
    std::string transform = attack::to_string(c.finetune.transform);
    f.get("transform", transform);
    c.finetune.transform = attack::parse_finetune_transform(transform);
    f.get("trajectory", c.finetune.trajectory);
    f.finish();
  }
  if (auto s = root.sub("seeds")) {
    Section sd(*s, root.child("seeds"));
    sd.get("data", c.seeds.data);
    sd.get("init", c.seeds.init);
    sd.get("wrong_keys", c.seeds.wrong_keys);
    sd.get("attacker", c.seeds.attacker);
    sd.finish();
  }
  root.get("checkpoint", c.checkpoint);
  root.get("out", c.out);
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  // Relative file references are taken relative to the config file.
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.protection.key_file);
  resolve(c.checkpoint);
  if (!c.data.dir.empty()) resolve(c.data.dir);
  return c;
}

std::string canonical_text(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("out");  // where results go does not change them
  return j.dump();
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  return sha256_hex(canonical_text(config));
}

}  // namespace keylock::harness
