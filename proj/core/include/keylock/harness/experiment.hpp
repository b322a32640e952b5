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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "keylock/attack/attacks.hpp"
#include "keylock/harness/config.hpp"
#include "keylock/harness/model_io.hpp"
#include "keylock/net/trainer.hpp"

namespace keylock::harness {

/// Accuracy under the three inference conditions. `wrong` is absent for an
/// unprotected model, where `correct` and `none` coincide.
struct ThreeConditionResult {
  double correct = 0.0;
  std::optional<attack::RandomKeyStats> wrong;
  double none = 0.0;
};

ThreeConditionResult three_condition_eval(const net::ProtectedModel& model,
                                          const data::Dataset& test, std::size_t wrong_keys,
                                          std::uint64_t wrong_key_seed,
                                          std::size_t batch_size = 256);

/// Per-placement block geometry and key space, as reported.
nlohmann::json placement_json(const net::ProtectedModel& model);

nlohmann::json eval_report_json(const ExperimentConfig& config,
                                const net::ProtectedModel& model,
                                const ThreeConditionResult& result,
                                double runtime_seconds);

struct KeyEstimationOutcome {
  std::string placement;
  std::size_t attacker_size = 0;
  std::size_t eval_size = 0;
  attack::KeyEstimationTrace trace;
  double correct_accuracy = 0.0;    // test set, true key
  double estimated_accuracy = 0.0;  // test set, estimated permutation
};

struct FinetuneOutcome {
  std::size_t size = 0;
  attack::FinetuneResult result;
};

nlohmann::json key_estimation_report_json(const ExperimentConfig& config,
                                          const std::vector<KeyEstimationOutcome>& outcomes,
                                          double runtime_seconds);
nlohmann::json finetune_report_json(const ExperimentConfig& config, double original_accuracy,
                                    const std::vector<FinetuneOutcome>& outcomes,
                                    double runtime_seconds);

/// Runs the greedy key estimation against `model` at `placement` with D' drawn from the
/// experiment pool.
KeyEstimationOutcome run_key_estimation(const ExperimentConfig& config,
                                        const net::ProtectedModel& model,
                                        const ExperimentData& data,
                                        const std::string& placement);

/// Fine-tunes a key-less copy of `model` once per configured |D'|.
std::vector<FinetuneOutcome> run_finetune(const ExperimentConfig& config,
                                          const net::ProtectedModel& model,
                                          const ExperimentData& data);

struct ExperimentResult {
  std::filesystem::path out_dir;
  net::TrainingLog training;
  ThreeConditionResult eval;
  nlohmann::json eval_report;
  std::vector<KeyEstimationOutcome> key_estimation;
  std::vector<FinetuneOutcome> finetune;
};

struct RunOptions {
  std::ostream* log = nullptr;  // progress lines, if set
};

/// Trains (or loads) the model, evaluates it under the three conditions,
/// runs the enabled attacks, and writes everything to config.out:
///   model.ckpt, model.json, training_log.json, eval_report.json,
///   attack_key_estimation.json, attack_finetune.json, and the accuracy
///   tables protection.csv, key_estimation.csv and finetune.csv.
/// A second run into the same directory while one holds ".lock" fails. On
/// error the partial artifacts stay and a "FAILED" file names the cause.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Drops timing fields so reports from two runs can be compared.
nlohmann::json strip_timing(nlohmann::json report);

}  // namespace keylock::harness
