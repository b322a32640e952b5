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

#include "keylock/harness/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "keylock/errors.hpp"
#include "keylock/shuffle/key_space.hpp"

namespace keylock::harness {

using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Exclusive ".lock" in the output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw std::runtime_error("output directory " + dir.string() +
                               " is locked by another experiment (" + path_.string() + ")");
    }
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string model_label(const ExperimentConfig& c) {
  if (c.protection.placements.empty()) return "baseline";
  std::string label;
  for (const auto& p : c.protection.placements) label += (label.empty() ? "" : "+") + p;
  return label + " (M=" + std::to_string(c.protection.block_size) + ")";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

json config_echo(const ExperimentConfig& c) { return json::parse(canonical_text(c)); }

}  // namespace

ThreeConditionResult three_condition_eval(const net::ProtectedModel& model,
                                          const data::Dataset& test, std::size_t wrong_keys,
                                          std::uint64_t wrong_key_seed, std::size_t batch_size) {
  ThreeConditionResult r;
  r.none = net::evaluate(model, test, net::KeyMode::none(), batch_size);
  if (!model.is_protected()) {
    r.correct = r.none;
    return r;
  }
  r.correct = net::evaluate(model, test, net::KeyMode::correct(), batch_size);
  r.wrong = attack::random_key_eval(model, test, wrong_keys, wrong_key_seed);
  return r;
}

json placement_json(const net::ProtectedModel& model) {
  json out = json::array();
  for (const auto& a : model.active()) {
    out.push_back({{"id", a.placement.id},
                   {"channels", a.placement.channels},
                   {"height", a.placement.height},
                   {"width", a.placement.width},
                   {"block_size", a.spec.block_size},
                   {"vector_length", a.spec.vector_length()},
                   {"key_space",
                    {{"symbol", shuffle::key_space_symbol(a.spec)},
                     {"decimal", shuffle::key_space(a.spec).str()}}}});
  }
  return out;
}

json eval_report_json(const ExperimentConfig& config, const net::ProtectedModel& model,
                      const ThreeConditionResult& r, double runtime_seconds) {
  json accuracy{{"correct", r.correct}, {"none", r.none}};
  if (r.wrong) {
    accuracy["wrong_mean"] = r.wrong->mean;
    accuracy["wrong_std"] = r.wrong->stddev;
    accuracy["wrong_per_key"] = r.wrong->per_key;
    accuracy["wrong_key_fingerprints"] = r.wrong->fingerprints;
  } else {
    accuracy["wrong_mean"] = nullptr;
    accuracy["wrong_std"] = nullptr;
    accuracy["wrong_per_key"] = json::array();
    accuracy["wrong_key_fingerprints"] = json::array();
  }
  return json{{"schema", "keylock.eval_report/1"},
              {"config_hash", config_hash(config)},
              {"config", config_echo(config)},
              {"model", model_label(config)},
              {"key_fingerprint", model.key() ? model.key()->fingerprint() : std::string()},
              {"placements", placement_json(model)},
              {"accuracy", accuracy},
              {"timing", {{"runtime_seconds", runtime_seconds}}}};
}

json key_estimation_report_json(const ExperimentConfig& config,
                                const std::vector<KeyEstimationOutcome>& outcomes,
                                double runtime_seconds) {
  json results = json::array();
  for (const auto& o : outcomes) {
    std::size_t accepted = 0;
    for (const auto& s : o.trace.steps) accepted += s.accepted ? 1 : 0;
    json steps = json::array();
    const std::size_t total = o.trace.steps.size();
    const std::size_t keep = config.key_estimation.full_trace ? total : std::min<std::size_t>(total, 20);
    for (std::size_t k = 0; k < keep; ++k) {
      // Summary traces keep the first and last ten decisions.
      const std::size_t idx = (config.key_estimation.full_trace || k < 10) ? k : total - (keep - k);
      const auto& s = o.trace.steps[idx];
      steps.push_back({{"step", idx}, {"i", s.i}, {"j", s.j}, {"accepted", s.accepted},
                       {"candidate_accuracy", s.candidate_accuracy}, {"accuracy", s.accuracy}});
    }
    std::vector<std::size_t> initial(o.trace.initial.indices().begin(), o.trace.initial.indices().end());
    std::vector<std::size_t> final_v(o.trace.final.indices().begin(), o.trace.final.indices().end());
    results.push_back({{"placement", o.placement},
                       {"vector_length", o.trace.final.size()},
                       {"pairs", total},
                       {"attacker_size", o.attacker_size},
                       {"eval_size", o.eval_size},
                       {"accepted_swaps", accepted},
                       {"attacker_initial_accuracy", o.trace.initial_accuracy},
                       {"attacker_final_accuracy", o.trace.final_accuracy},
                       {"correct_accuracy", o.correct_accuracy},
                       {"estimated_accuracy", o.estimated_accuracy},
                       {"initial_permutation", initial},
                       {"estimated_permutation", final_v},
                       {"trace_mode", config.key_estimation.full_trace ? "full" : "summary"},
                       {"trace", steps}});
  }
  return json{{"schema", "keylock.attack_report/1"},
              {"attack", "key_estimation"},
              {"config_hash", config_hash(config)},
              {"config", config_echo(config)},
              {"seeds", config_echo(config).at("seeds")},
              {"results", results},
              {"timing", {{"wall_clock_seconds", runtime_seconds}}}};
}

json finetune_report_json(const ExperimentConfig& config, double original_accuracy,
                          const std::vector<FinetuneOutcome>& outcomes, double runtime_seconds) {
  json results = json::array();
  for (const auto& o : outcomes) {
    json r{{"size", o.size},
           {"initial_accuracy", o.result.initial_accuracy},
           {"final_accuracy", o.result.final_accuracy},
           {"trajectory", o.result.trajectory}};
    if (o.result.random_key_fingerprint) r["random_key_fingerprint"] = *o.result.random_key_fingerprint;
    results.push_back(r);
  }
  return json{{"schema", "keylock.attack_report/1"},
              {"attack", "finetune"},
              {"config_hash", config_hash(config)},
              {"config", config_echo(config)},
              {"seeds", config_echo(config).at("seeds")},
              {"transform", attack::to_string(config.finetune.transform)},
              {"epochs", config.finetune.epochs},
              {"original_accuracy", original_accuracy},
              {"results", results},
              {"timing", {{"wall_clock_seconds", runtime_seconds}}}};
}

KeyEstimationOutcome run_key_estimation(const ExperimentConfig& config,
                                        const net::ProtectedModel& model,
                                        const ExperimentData& data,
                                        const std::string& placement) {
  KeyEstimationOutcome out;
  out.placement = placement;
  out.attacker_size = config.key_estimation.attacker_size;
  const attack::AttackerView view(
      model, placement, data.attacker_subset(out.attacker_size, config.seeds.attacker));
  attack::KeyEstimationOptions options;
  options.block_size = config.protection.block_size;
  options.eval_size = config.key_estimation.eval_size;
  options.seed = config.seeds.attacker;
  out.eval_size = options.eval_size == 0 ? out.attacker_size
                                         : std::min(options.eval_size, out.attacker_size);
  out.trace = attack::estimate_key(view, options);
  out.correct_accuracy = net::evaluate(model, data.test, net::KeyMode::correct());
  out.estimated_accuracy = attack::accuracy_with_permutation(
      model, placement, config.protection.block_size, out.trace.final, data.test);
  return out;
}

std::vector<FinetuneOutcome> run_finetune(const ExperimentConfig& config,
                                          const net::ProtectedModel& model,
                                          const ExperimentData& data) {
  std::vector<FinetuneOutcome> out;
  nn::SgdHyper hyper = config.train.hyper;
  hyper.epochs = config.finetune.epochs;
  const std::string placement = model.active().empty() ? std::string(net::kPlacementIds[0])
                                                       : model.active().front().placement.id;
  for (std::size_t size : config.finetune.sizes) {
    const attack::AttackerView view(model, placement,
                                    data.attacker_subset(size, config.seeds.attacker + size));
    attack::FinetuneOptions options;
    options.transform = config.finetune.transform;
    options.seed = config.seeds.attacker;
    options.augment = config.train.augment;
    options.record_trajectory = config.finetune.trajectory;
    out.push_back({size, attack::finetune_attack(view, data.test, hyper, options)});
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const Stopwatch total;
  ExperimentResult result;
  result.out_dir = config.out;
  std::filesystem::create_directories(result.out_dir);
  const DirectoryLock lock(result.out_dir);
  const auto failed_marker = result.out_dir / "FAILED";
  std::filesystem::remove(failed_marker);
  auto say = [&](const std::string& line) {
    if (options.log != nullptr) *options.log << line << std::endl;
  };

  try {
    std::size_t pool_min = 0;
    if (config.key_estimation.enabled) pool_min = config.key_estimation.attacker_size;
    for (auto s : config.finetune.sizes) {
      if (config.finetune.enabled) pool_min = std::max(pool_min, s);
    }

    std::optional<LoadedModel> pretrained;
    if (!config.checkpoint.empty()) pretrained = load_model(config.checkpoint);
    const ExperimentData data = prepare_data(
        config.data, config.seeds, pool_min,
        pretrained ? std::optional(pretrained->manifest.normalization) : std::nullopt);
    say("data: " + std::to_string(data.train.size()) + " train, " +
        std::to_string(data.test.size()) + " test");

    net::ProtectedModel model = pretrained ? std::move(pretrained->model)
                                           : net::ProtectedModel::build(config.arch, config.seeds.init);
    std::optional<shuffle::SecretKey> key;
    if (!config.protection.placements.empty()) {
      key = shuffle::load_key_file(config.protection.key_file);
      if (pretrained) {
        if (pretrained->manifest.placements != config.protection.placements ||
            pretrained->manifest.block_size != config.protection.block_size) {
          throw ConfigError("checkpoint protection does not match the config");
        }
        if (pretrained->manifest.key_fingerprint != key->fingerprint()) {
          throw ConfigError("key file does not match the checkpoint's key fingerprint");
        }
        model.bind_key(*key);
      } else {
        model.protect(config.protection.placements, config.protection.block_size, *key);
      }
    }

    nn::Sgd<float> optimizer(config.train.hyper);
    if (config.train.hyper.epochs > 0) {
      net::TrainOptions train;
      train.seed = config.seeds.data;
      train.augment = config.train.augment;
      train.on_epoch = [&](const net::EpochLog& e) {
        say("epoch " + std::to_string(e.epoch) + " loss " + fixed(e.loss) + " acc " +
            fixed(e.accuracy) + " lr " + std::to_string(e.lr));
      };
      result.training = net::train_model(
          model, data.train, config.train.hyper,
          model.is_protected() ? net::KeyMode::correct() : net::KeyMode::none(), train,
          &optimizer);
      json epochs = json::array();
      for (const auto& e : result.training.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}, {"lr", e.lr}});
      }
      write_json(result.out_dir / "training_log.json",
                 {{"config_hash", config_hash(config)}, {"epochs", epochs}});
    }

    ModelManifest manifest;
    manifest.arch = config.arch;
    manifest.placements = config.protection.placements;
    manifest.block_size = config.protection.placements.empty() ? 0 : config.protection.block_size;
    manifest.key_fingerprint = key ? key->fingerprint() : std::string();
    manifest.normalization = data.normalization;
    manifest.data = config.data;
    manifest.seeds = config.seeds;
    save_model(result.out_dir / "model.ckpt", model, manifest,
               config.train.hyper.epochs > 0 ? &optimizer : nullptr);

    const Stopwatch eval_clock;
    result.eval = three_condition_eval(model, data.test, config.eval.wrong_keys,
                                       config.seeds.wrong_keys, config.eval.batch_size);
    say("accuracy: correct " + fixed(result.eval.correct) +
        (result.eval.wrong ? " wrong " + fixed(result.eval.wrong->mean) : std::string()) +
        " none " + fixed(result.eval.none));
    result.eval_report = eval_report_json(config, model, result.eval, total.seconds());
    write_json(result.out_dir / "eval_report.json", result.eval_report);

    std::string key_space = "-";
    if (!model.active().empty()) key_space = shuffle::key_space_symbol(model.active().front().spec);
    write_text(result.out_dir / "protection.csv",
               "model,key_space,accuracy_correct,accuracy_wrong_mean,accuracy_wrong_std,accuracy_none\n" +
                   csv_field(model_label(config)) + "," + key_space + "," + fixed(result.eval.correct) +
                   "," + (result.eval.wrong ? fixed(result.eval.wrong->mean) : "") + "," +
                   (result.eval.wrong ? fixed(result.eval.wrong->stddev) : "") + "," +
                   fixed(result.eval.none) + "\n");

    if (config.key_estimation.enabled) {
      const Stopwatch clock;
      auto placements = config.key_estimation.placements;
      if (placements.empty()) placements = config.protection.placements;
      std::string table = "model,correct,estimated\n";
      for (const auto& p : placements) {
        say("key estimation at " + p);
        result.key_estimation.push_back(run_key_estimation(config, model, data, p));
        const auto& o = result.key_estimation.back();
        table += csv_field(p + " (M=" + std::to_string(config.protection.block_size) + ")") + "," +
                 fixed(o.correct_accuracy) + "," + fixed(o.estimated_accuracy) + "\n";
      }
      write_json(result.out_dir / "attack_key_estimation.json",
                 key_estimation_report_json(config, result.key_estimation, clock.seconds()));
      write_text(result.out_dir / "key_estimation.csv", table);
    }

    if (config.finetune.enabled) {
      const Stopwatch clock;
      say("fine-tuning attack");
      result.finetune = run_finetune(config, model, data);
      write_json(result.out_dir / "attack_finetune.json",
                 finetune_report_json(config, result.eval.correct, result.finetune, clock.seconds()));
      std::string header = "model,original";
      std::string row = csv_field(model_label(config)) + "," + fixed(result.eval.correct);
      for (const auto& o : result.finetune) {
        header += ",d" + std::to_string(o.size);
        row += "," + fixed(o.result.final_accuracy);
      }
      write_text(result.out_dir / "finetune.csv", header + "\n" + row + "\n");
    }
  } catch (const std::exception& e) {
    write_text(failed_marker, std::string(e.what()) + "\n");
    throw;
  }
  return result;
}

json strip_timing(json report) {
  if (report.is_object()) {
    report.erase("timing");
    for (auto& [k, v] : report.items()) v = strip_timing(v);
  } else if (report.is_array()) {
    for (auto& v : report) v = strip_timing(v);
  }
  return report;
}

}  // namespace keylock::harness
