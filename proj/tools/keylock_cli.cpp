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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "keylock/attack/attacks.hpp"
#include "keylock/errors.hpp"
#include "keylock/harness/config.hpp"
#include "keylock/harness/experiment.hpp"
#include "keylock/harness/model_io.hpp"
#include "keylock/shuffle/key_space.hpp"
#include "keylock/shuffle/secret_key.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace keylock;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool json_output = false;
  std::string data_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "Base seed; the four named seeds become seed..seed+3");
  cmd->add_option("--out", c.out, "Output path");
  cmd->add_flag("--json", c.json_output, "Print machine-readable JSON");
  cmd->add_option("--data", c.data_dir, "CIFAR-10 directory (default: $KEYLOCK_DATA_DIR)");
}

void apply_seed(harness::Seeds& seeds, const std::optional<std::uint64_t>& seed) {
  if (!seed) return;
  seeds = {*seed, *seed + 1, *seed + 2, *seed + 3};
}

harness::ExperimentConfig base_config(const Common& c) {
  harness::ExperimentConfig cfg;
  if (!c.config.empty()) cfg = harness::load_config(c.config);
  apply_seed(cfg.seeds, c.seed);
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.data_dir.empty()) cfg.data.dir = c.data_dir;
  return cfg;
}

void write_report(const std::string& path, const json& j) {
  if (path.empty()) return;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path);
}

// Data for a saved model: its own subsets and normalization, optionally
// redirected to another directory.
harness::ExperimentData model_data(const harness::ModelManifest& m, const std::string& dir,
                                   std::size_t pool_min) {
  harness::DataConfig d = m.data;
  if (!dir.empty()) d.dir = dir;
  return harness::prepare_data(d, m.seeds, pool_min, m.normalization);
}

// Config echo for reports about a saved model.
harness::ExperimentConfig manifest_config(const harness::LoadedModel& loaded,
                                          const harness::ExperimentConfig& base) {
  harness::ExperimentConfig cfg = base;
  cfg.arch = loaded.manifest.arch;
  cfg.data = loaded.manifest.data;
  cfg.protection.placements = loaded.manifest.placements;
  cfg.protection.block_size = loaded.manifest.block_size;
  return cfg;
}

int cmd_keygen(const Common& c, const std::string& label) {
  if (c.out.empty()) throw ConfigError("keygen needs --out");
  shuffle::SecretKey key;
  if (c.seed) {
    std::mt19937_64 rng(*c.seed);
    key = shuffle::SecretKey::random(rng, label);
  } else {
    key = shuffle::SecretKey::generate(label);
  }
  shuffle::save_key_file(c.out, key);
  if (c.json_output) {
    std::cout << json{{"path", c.out}, {"fingerprint", key.fingerprint()}}.dump() << '\n';
  } else {
    std::cout << "wrote " << c.out << " (fingerprint " << key.fingerprint() << ")\n";
  }
  return 0;
}

int cmd_run(const Common& c, bool attacks) {
  if (c.config.empty()) throw ConfigError("this command needs --config");
  harness::ExperimentConfig cfg = base_config(c);
  if (!attacks) {
    cfg.key_estimation.enabled = false;
    cfg.finetune.enabled = false;
  }
  harness::RunOptions options;
  if (!c.json_output) options.log = &std::cerr;
  const auto result = harness::run_experiment(cfg, options);
  if (c.json_output) {
    std::cout << result.eval_report.dump(2) << '\n';
  } else {
    std::cout << "results in " << result.out_dir.string() << '\n';
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& key_path,
             const std::string& mode, const std::string& wrong_key_path,
             std::optional<std::size_t> wrong_keys) {
  auto loaded = harness::load_model(model_path);
  harness::ExperimentConfig cfg = manifest_config(loaded, base_config(c));
  cfg.protection.key_file = key_path;
  if (wrong_keys) cfg.eval.wrong_keys = *wrong_keys;
  const auto data = model_data(loaded.manifest, c.data_dir, 0);

  const bool protected_model = !loaded.manifest.placements.empty();
  if (mode != "none" && protected_model) {
    if (key_path.empty()) throw ConfigError("mode '" + mode + "' needs --key");
    harness::bind_checked(loaded, shuffle::load_key_file(key_path));
  }
  json out{{"model", model_path}};
  if (mode == "all") {
    const auto r = harness::three_condition_eval(loaded.model, data.test, cfg.eval.wrong_keys,
                                                 cfg.seeds.wrong_keys, cfg.eval.batch_size);
    const json report = harness::eval_report_json(cfg, loaded.model, r, 0.0);
    write_report(c.out, report);
    out = report;
  } else if (mode == "correct") {
    out["accuracy"] = net::evaluate(loaded.model, data.test,
                                    protected_model ? net::KeyMode::correct() : net::KeyMode::none());
  } else if (mode == "none") {
    out["accuracy"] = net::evaluate(loaded.model, data.test, net::KeyMode::none());
  } else if (mode == "wrong") {
    if (!protected_model) throw ConfigError("wrong-key mode needs a protected model");
    if (!wrong_key_path.empty()) {
      const auto wrong = shuffle::load_key_file(wrong_key_path);
      out["accuracy"] = net::evaluate(loaded.model, data.test, net::KeyMode::wrong(wrong));
      out["wrong_key_fingerprint"] = wrong.fingerprint();
    } else {
      const auto stats = attack::random_key_eval(loaded.model, data.test, cfg.eval.wrong_keys,
                                                 cfg.seeds.wrong_keys);
      out["accuracy"] = stats.mean;
      out["std"] = stats.stddev;
      out["per_key"] = stats.per_key;
    }
  } else {
    throw ConfigError("unknown mode '" + mode + "'");
  }
  if (mode != "all") {
    out["mode"] = mode;
    write_report(c.out, out);
  }
  if (c.json_output) {
    std::cout << out.dump(2) << '\n';
  } else if (mode == "all") {
    const auto& a = out.at("accuracy");
    std::cout << "correct " << a.at("correct") << "\nwrong_mean " << a.at("wrong_mean")
              << "\nwrong_std " << a.at("wrong_std") << "\nnone " << a.at("none") << '\n';
  } else {
    std::cout << mode << " " << out.at("accuracy") << '\n';
  }
  return 0;
}

int cmd_attack_key(const Common& c, const std::string& model_path, const std::string& key_path,
                   std::string placement, std::optional<std::size_t> attacker_size,
                   std::optional<std::size_t> eval_size, const std::string& trace) {
  auto loaded = harness::load_model(model_path);
  if (loaded.manifest.placements.empty()) throw ConfigError("model is not protected");
  harness::ExperimentConfig cfg = manifest_config(loaded, base_config(c));
  if (attacker_size) cfg.key_estimation.attacker_size = *attacker_size;
  if (eval_size) cfg.key_estimation.eval_size = *eval_size;
  if (!trace.empty()) {
    if (trace != "full" && trace != "summary") throw ConfigError("--trace must be full or summary");
    cfg.key_estimation.full_trace = trace == "full";
  }
  if (placement.empty()) placement = loaded.manifest.placements.front();
  cfg.key_estimation.enabled = true;
  cfg.key_estimation.placements = {placement};
  const auto data = model_data(loaded.manifest, c.data_dir, cfg.key_estimation.attacker_size);

  const auto start = std::chrono::steady_clock::now();
  harness::KeyEstimationOutcome outcome;
  if (!key_path.empty()) {
    harness::bind_checked(loaded, shuffle::load_key_file(key_path));
    outcome = harness::run_key_estimation(cfg, loaded.model, data, placement);
  } else {
    // Without the key only attacker-side numbers are available.
    outcome.placement = placement;
    outcome.attacker_size = cfg.key_estimation.attacker_size;
    const attack::AttackerView view(loaded.model, placement,
                                    data.attacker_subset(outcome.attacker_size, cfg.seeds.attacker));
    attack::KeyEstimationOptions options;
    options.block_size = loaded.manifest.block_size;
    options.eval_size = cfg.key_estimation.eval_size;
    options.seed = cfg.seeds.attacker;
    outcome.eval_size = options.eval_size == 0 ? outcome.attacker_size
                                               : std::min(options.eval_size, outcome.attacker_size);
    outcome.trace = attack::estimate_key(view, options);
    outcome.correct_accuracy = std::nan("");
    outcome.estimated_accuracy = attack::accuracy_with_permutation(
        loaded.model, placement, loaded.manifest.block_size, outcome.trace.final, data.test);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json report = harness::key_estimation_report_json(cfg, {outcome}, seconds);
  if (key_path.empty()) report["results"][0]["correct_accuracy"] = nullptr;
  write_report(c.out, report);
  if (c.json_output) {
    std::cout << report.dump(2) << '\n';
  } else {
    std::cout << "placement " << placement << ": estimated " << outcome.estimated_accuracy
              << "% on the test set after " << outcome.trace.steps.size() << " pair decisions\n";
  }
  return 0;
}

int cmd_attack_finetune(const Common& c, const std::string& model_path,
                        const std::string& key_path, const std::vector<std::size_t>& sizes,
                        std::optional<std::size_t> epochs, const std::string& transform) {
  auto loaded = harness::load_model(model_path);
  if (loaded.manifest.placements.empty()) throw ConfigError("model is not protected");
  harness::ExperimentConfig cfg = manifest_config(loaded, base_config(c));
  if (!sizes.empty()) cfg.finetune.sizes = sizes;
  if (epochs) cfg.finetune.epochs = *epochs;
  if (!transform.empty()) cfg.finetune.transform = attack::parse_finetune_transform(transform);
  cfg.finetune.enabled = true;
  std::size_t pool_min = 0;
  for (auto s : cfg.finetune.sizes) pool_min = std::max(pool_min, s);
  const auto data = model_data(loaded.manifest, c.data_dir, pool_min);

  double original = std::nan("");
  if (!key_path.empty()) {
    harness::bind_checked(loaded, shuffle::load_key_file(key_path));
    original = net::evaluate(loaded.model, data.test, net::KeyMode::correct());
  }
  const auto start = std::chrono::steady_clock::now();
  const auto outcomes = harness::run_finetune(cfg, loaded.model, data);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json report = harness::finetune_report_json(cfg, original, outcomes, seconds);
  if (key_path.empty()) report["original_accuracy"] = nullptr;
  write_report(c.out, report);
  if (c.json_output) {
    std::cout << report.dump(2) << '\n';
  } else {
    for (const auto& o : outcomes) {
      std::cout << "|D'|=" << o.size << ": " << o.result.final_accuracy << "%\n";
    }
  }
  return 0;
}

int cmd_inspect(const Common& c, const std::string& model_path) {
  const auto loaded = harness::load_model(model_path);
  const auto& m = loaded.manifest;
  json out{{"arch", std::string(net::to_string(m.arch.preset))},
           {"widths", m.arch.widths},
           {"classes", m.arch.classes},
           {"parameters", loaded.model.network().parameter_count()},
           {"key_fingerprint", m.key_fingerprint},
           {"placements", harness::placement_json(loaded.model)}};
  if (c.json_output) {
    std::cout << out.dump(2) << '\n';
    return 0;
  }
  std::cout << "arch: " << net::to_string(m.arch.preset) << " widths";
  for (auto w : m.arch.widths) std::cout << ' ' << w;
  std::cout << ", " << out.at("parameters") << " parameters\n";
  std::cout << "key fingerprint: " << (m.key_fingerprint.empty() ? "(none)" : m.key_fingerprint)
            << '\n';
  if (loaded.model.active().empty()) std::cout << "placements: none (unprotected)\n";
  for (const auto& a : loaded.model.active()) {
    std::cout << "placement " << a.placement.id << ": (" << a.placement.channels << ", "
              << a.placement.height << ", " << a.placement.width << "), M=" << a.spec.block_size
              << ", key space " << shuffle::key_space_symbol(a.spec)
              << " (decimal: " << shuffle::key_space(a.spec).str() << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyed feature-map shuffling for model access control"};
  app.require_subcommand(1);
  Common common;

  auto* keygen = app.add_subcommand("keygen", "Write a fresh secret key file");
  add_common(keygen, common);
  std::string label;
  keygen->add_option("--label", label, "Free-form label stored with the key");

  auto* train = app.add_subcommand("train", "Train a model from a config");
  add_common(train, common);

  auto* run = app.add_subcommand("run", "Train, evaluate and attack as configured");
  add_common(run, common);

  std::string model_path, key_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
  add_common(eval, common);
  std::string mode = "all", wrong_key_path;
  std::optional<std::size_t> wrong_keys;
  eval->add_option("--model", model_path, "Checkpoint path")->required();
  eval->add_option("--key", key_path, "Secret key file");
  eval->add_option("--mode", mode, "correct | wrong | none | all")
      ->check(CLI::IsMember({"correct", "wrong", "none", "all"}));
  eval->add_option("--wrong-key", wrong_key_path, "Specific wrong key for --mode wrong");
  eval->add_option("--wrong-keys", wrong_keys, "Number of random wrong keys");

  auto* attack_key = app.add_subcommand("attack-key", "Greedy key estimation attack");
  add_common(attack_key, common);
  std::string placement, trace;
  std::optional<std::size_t> attacker_size, eval_size;
  attack_key->add_option("--model", model_path, "Checkpoint path")->required();
  attack_key->add_option("--key", key_path, "True key, to report correct-key accuracy");
  attack_key->add_option("--placement", placement, "Placement to attack");
  attack_key->add_option("--attacker-size", attacker_size, "|D'|");
  attack_key->add_option("--eval-size", eval_size, "Rows of D' used for scoring");
  attack_key->add_option("--trace", trace, "full | summary");

  auto* attack_ft = app.add_subcommand("attack-finetune", "Fine-tuning attack");
  add_common(attack_ft, common);
  std::vector<std::size_t> sizes;
  std::optional<std::size_t> epochs;
  std::string transform;
  attack_ft->add_option("--model", model_path, "Checkpoint path")->required();
  attack_ft->add_option("--key", key_path, "True key, to report the original accuracy");
  attack_ft->add_option("--sizes", sizes, "Attacker set sizes")->delimiter(',');
  attack_ft->add_option("--epochs", epochs, "Fine-tuning epochs");
  attack_ft->add_option("--attack-transform", transform, "bypass | random-key");

  auto* inspect = app.add_subcommand("inspect", "Describe a saved model");
  add_common(inspect, common);
  inspect->add_option("--model", model_path, "Checkpoint path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*keygen) return cmd_keygen(common, label);
    if (*train) return cmd_run(common, false);
    if (*run) return cmd_run(common, true);
    if (*eval) return cmd_eval(common, model_path, key_path, mode, wrong_key_path, wrong_keys);
    if (*attack_key) {
      return cmd_attack_key(common, model_path, key_path, placement, attacker_size, eval_size,
                            trace);
    }
    if (*attack_ft) {
      return cmd_attack_finetune(common, model_path, key_path, sizes, epochs, transform);
    }
    if (*inspect) return cmd_inspect(common, model_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
