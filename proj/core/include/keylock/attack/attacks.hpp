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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "keylock/data/dataset.hpp"
#include "keylock/net/protected_model.hpp"
#include "keylock/nn/sgd.hpp"
#include "keylock/shuffle/permutation.hpp"
#include "keylock/shuffle/secret_key.hpp"

namespace keylock::attack {

/// What an attacker holds: a copy of the model without its key, the
/// location of the shuffle, and a small labeled set D'.
class AttackerView {
 public:
  /// Copies `stolen` and drops its key. Throws ConfigError for an unknown
  /// placement.
  AttackerView(const net::ProtectedModel& stolen, std::string placement,
               data::Dataset data);

  const net::ProtectedModel& model() const noexcept { return model_; }
  net::ProtectedModel& model() noexcept { return model_; }
  const net::Placement& placement() const { return model_.placement(placement_); }
  const data::Dataset& data() const noexcept { return data_; }

 private:
  net::ProtectedModel model_;
  std::string placement_;
  data::Dataset data_;
};

// ------------------------------------------------------- key estimation

struct TraceStep {
  std::size_t i = 0;
  std::size_t j = 0;
  bool accepted = false;
  double candidate_accuracy = 0.0;  // after the swap, before the decision
  double accuracy = 0.0;            // incumbent after the decision
};

struct KeyEstimationTrace {
  shuffle::PermutationVector initial;
  shuffle::PermutationVector final;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::vector<TraceStep> steps;
};

using AccuracyFn = std::function<double(const shuffle::PermutationVector&)>;

/// One pass over every pair (i, j), i < j, in lexicographic order: swap,
/// score, and undo the swap only if the score fell strictly below the
/// incumbent. Ties keep the swap.
KeyEstimationTrace greedy_pair_search(shuffle::PermutationVector start,
                                      const AccuracyFn& accuracy,
                                      const std::function<void(const TraceStep&)>& on_step = {});

/// Scores candidate permutations at one placement on a fixed labeled set.
/// Activations up to the slot are computed once; each score reruns only the
/// layers after it.
class PlacementScorer {
 public:
  PlacementScorer(const net::ProtectedModel& model, std::string placement,
                  std::size_t block_size, const data::Dataset& data,
                  std::size_t batch_size = 256);

  std::size_t vector_length() const noexcept { return spec_.vector_length(); }
  double operator()(const shuffle::PermutationVector& v) const;

 private:
  const net::ProtectedModel* model_;
  net::Placement placement_;
  shuffle::BlockSpec spec_;
  std::vector<nn::Tensor<float>> prefix_;  // slot inputs, per batch
  std::vector<std::vector<int>> labels_;
  std::size_t total_ = 0;
};

struct KeyEstimationOptions {
  std::size_t block_size = 2;
  /// Rows of the attacker set used for scoring; 0 means all of them.
  std::size_t eval_size = 0;
  std::uint64_t seed = 0;  // draws K' and, if needed, the scoring subset
  std::function<void(const TraceStep&)> on_step;
};

/// Greedy key estimation: start from the permutation of a random K' and run
/// greedy_pair_search scored on the attacker's data. Throws
/// std::invalid_argument when the attacker set is empty.
KeyEstimationTrace estimate_key(const AttackerView& view,
                                const KeyEstimationOptions& options);

/// Accuracy of `model` on `test` with `v` at `placement` and every other
/// slot left as identity.
double accuracy_with_permutation(const net::ProtectedModel& model,
                                 const std::string& placement,
                                 std::size_t block_size,
                                 const shuffle::PermutationVector& v,
                                 const data::Dataset& test);

// ----------------------------------------------------------- fine-tuning

enum class FinetuneTransform { bypass, random_key };

std::string to_string(FinetuneTransform t);
FinetuneTransform parse_finetune_transform(const std::string& name);

struct FinetuneOptions {
  FinetuneTransform transform = FinetuneTransform::bypass;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Evaluate on the held-out set after every epoch; otherwise only at the
  /// end.
  bool record_trajectory = true;
};

struct FinetuneResult {
  std::vector<double> trajectory;  // held-out accuracy after each epoch
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::optional<std::string> random_key_fingerprint;
};

/// Continues training the stolen weights on the attacker set for
/// hyper.epochs epochs. Bypass runs every slot as identity; random_key
/// binds a key drawn from options.seed and trains and evaluates under it.
FinetuneResult finetune_attack(const AttackerView& view, const data::Dataset& test,
                               const nn::SgdHyper& hyper,
                               const FinetuneOptions& options = {},
                               net::ProtectedModel* tuned = nullptr);

// ------------------------------------------------------- random keys

struct RandomKeyStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<double> per_key;
  std::vector<std::string> fingerprints;
  std::size_t resampled = 0;
};

using KeySource = std::function<shuffle::SecretKey()>;

/// Accuracy under n_keys random wrong keys. A drawn key whose fingerprint
/// matches the bound key is discarded and redrawn. Needs a bound key.
RandomKeyStats random_key_eval(const net::ProtectedModel& model, const data::Dataset& test,
                               std::size_t n_keys, std::uint64_t rng_seed);
RandomKeyStats random_key_eval(const net::ProtectedModel& model, const data::Dataset& test,
                               std::size_t n_keys, const KeySource& source);

}  // namespace keylock::attack
