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

#include "keylock/attack/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "keylock/errors.hpp"
#include "keylock/net/trainer.hpp"
#include "keylock/nn/loss.hpp"
#include "keylock/shuffle/key_space.hpp"

namespace keylock::attack {

AttackerView::AttackerView(const net::ProtectedModel& stolen, std::string placement,
                           data::Dataset data)
    : model_(stolen), placement_(std::move(placement)), data_(std::move(data)) {
  model_.unbind_key();
  model_.placement(placement_);
}

KeyEstimationTrace greedy_pair_search(shuffle::PermutationVector start,
                                      const AccuracyFn& accuracy,
                                      const std::function<void(const TraceStep&)>& on_step) {
  KeyEstimationTrace trace;
  trace.initial = start;
  double incumbent = accuracy(start);
  trace.initial_accuracy = incumbent;
  shuffle::PermutationVector v = std::move(start);
  if (v.size() >= 2) {
    trace.steps.reserve(v.size() * (v.size() - 1) / 2);
    for (const auto [i, j] : shuffle::PairSet(v.size())) {
      v.swap(i, j);
      const double current = accuracy(v);
      TraceStep step{i, j, true, current, current};
      if (current < incumbent) {
        v.swap(i, j);
        step.accepted = false;
        step.accuracy = incumbent;
      } else {
        incumbent = current;
      }
      trace.steps.push_back(step);
      if (on_step) on_step(step);
    }
  }
  trace.final = std::move(v);
  trace.final_accuracy = incumbent;
  return trace;
}

PlacementScorer::PlacementScorer(const net::ProtectedModel& model, std::string placement,
                                 std::size_t block_size, const data::Dataset& data,
                                 std::size_t batch_size)
    : model_(&model), placement_(model.placement(placement)) {
  if (data.size() == 0) throw std::invalid_argument("attacker data is empty");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  spec_ = shuffle::BlockSpec{block_size, placement_.channels};
  spec_.validate(placement_.height, placement_.width);
  total_ = data.size();
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.size());
    rows.resize(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    prefix_.push_back(model.network().infer_range(data.gather_images(rows), 0,
                                                  placement_.layer_index));
    labels_.push_back(data.gather_labels(rows));
  }
}

double PlacementScorer::operator()(const shuffle::PermutationVector& v) const {
  const shuffle::BlockShufflePlan plan(v, spec_, placement_.height, placement_.width);
  const auto& net = model_->network();
  std::size_t correct = 0;
  for (std::size_t b = 0; b < prefix_.size(); ++b) {
    nn::Tensor<float> shuffled(prefix_[b].shape());
    plan.apply<float>(prefix_[b].values(), shuffled.values());
    const auto logits =
        net.infer_range(shuffled, placement_.layer_index + 1, net.layer_count());
    const auto predicted = nn::argmax_rows(logits);
    for (std::size_t r = 0; r < predicted.size(); ++r) {
      if (predicted[r] == labels_[b][r]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total_);
}

KeyEstimationTrace estimate_key(const AttackerView& view,
                                const KeyEstimationOptions& options) {
  if (view.data().size() == 0) throw std::invalid_argument("attacker data is empty");
  std::mt19937_64 rng(options.seed);
  const auto guess = shuffle::SecretKey::random(rng);
  const data::Dataset* scoring = &view.data();
  data::Dataset subset;
  if (options.eval_size != 0 && options.eval_size < view.data().size()) {
    subset = data::sample_subset(view.data(), options.eval_size, rng(), true);
    scoring = &subset;
  }
  const PlacementScorer scorer(view.model(), view.placement().id, options.block_size,
                               *scoring);
  auto start = shuffle::derive_permutation(guess, scorer.vector_length());
  return greedy_pair_search(std::move(start), std::cref(scorer), options.on_step);
}

double accuracy_with_permutation(const net::ProtectedModel& model,
                                 const std::string& placement, std::size_t block_size,
                                 const shuffle::PermutationVector& v,
                                 const data::Dataset& test) {
  const net::Placement& p = model.placement(placement);
  nn::ShuffleBindings bindings;
  bindings.bind(p.id, std::make_shared<const shuffle::BlockShufflePlan>(
                          v, shuffle::BlockSpec{block_size, p.channels}, p.height, p.width));
  return net::accuracy(model.network(), test, bindings);
}

std::string to_string(FinetuneTransform t) {
  return t == FinetuneTransform::bypass ? "bypass" : "random-key";
}

FinetuneTransform parse_finetune_transform(const std::string& name) {
  if (name == "bypass") return FinetuneTransform::bypass;
  if (name == "random-key" || name == "random_key") return FinetuneTransform::random_key;
  throw ConfigError("unknown fine-tune transform '" + name + "'");
}

FinetuneResult finetune_attack(const AttackerView& view, const data::Dataset& test,
                               const nn::SgdHyper& hyper, const FinetuneOptions& options,
                               net::ProtectedModel* tuned) {
  if (view.data().size() == 0) throw std::invalid_argument("attacker data is empty");
  net::ProtectedModel model = view.model();
  FinetuneResult result;
  net::KeyMode mode = net::KeyMode::none();
  if (options.transform == FinetuneTransform::random_key) {
    std::mt19937_64 rng(options.seed ^ 0x6b657973ULL);
    const auto key = shuffle::SecretKey::random(rng);
    model.bind_key(key);
    mode = net::KeyMode::correct();
    result.random_key_fingerprint = key.fingerprint();
  }
  result.initial_accuracy = net::evaluate(model, test, mode);
  result.final_accuracy = result.initial_accuracy;
  if (hyper.epochs > 0) {
    net::TrainOptions train;
    train.seed = options.seed;
    train.augment = options.augment;
    if (options.record_trajectory) {
      train.on_epoch = [&](const net::EpochLog&) {
        result.trajectory.push_back(net::evaluate(model, test, mode));
      };
    }
    net::train_model(model, view.data(), hyper, mode, train);
    result.final_accuracy = options.record_trajectory ? result.trajectory.back()
                                                      : net::evaluate(model, test, mode);
  }
  if (tuned != nullptr) *tuned = std::move(model);
  return result;
}

RandomKeyStats random_key_eval(const net::ProtectedModel& model, const data::Dataset& test,
                               std::size_t n_keys, std::uint64_t rng_seed) {
  auto rng = std::make_shared<std::mt19937_64>(rng_seed);
  return random_key_eval(model, test, n_keys,
                         [rng] { return shuffle::SecretKey::random(*rng); });
}

RandomKeyStats random_key_eval(const net::ProtectedModel& model, const data::Dataset& test,
                               std::size_t n_keys, const KeySource& source) {
  if (n_keys == 0) throw std::invalid_argument("n_keys must be at least 1");
  if (!model.key()) throw ConfigError("no key bound to the model");
  const std::string true_fp = model.key()->fingerprint();
  RandomKeyStats stats;
  for (std::size_t k = 0; k < n_keys; ++k) {
    shuffle::SecretKey key = source();
    while (key.fingerprint() == true_fp) {
      ++stats.resampled;
      key = source();
    }
    stats.per_key.push_back(net::evaluate(model, test, net::KeyMode::wrong(key)));
    stats.fingerprints.push_back(key.fingerprint());
  }
  const double n = static_cast<double>(stats.per_key.size());
  stats.mean = std::accumulate(stats.per_key.begin(), stats.per_key.end(), 0.0) / n;
  double sq = 0.0;
  for (double a : stats.per_key) sq += (a - stats.mean) * (a - stats.mean);
  stats.stddev = std::sqrt(sq / n);
  return stats;
}

}  // namespace keylock::attack
