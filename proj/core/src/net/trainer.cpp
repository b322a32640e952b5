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

#include "keylock/net/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "keylock/errors.hpp"
#include "keylock/nn/loss.hpp"

namespace keylock::net {

namespace {
std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  std::size_t steps = n / batch;
  if (n % batch >= 2) ++steps;
  return steps;
}
}  // namespace

TrainingLog train_model(ProtectedModel& model, const data::Dataset& train,
                        const nn::SgdHyper& hyper, const KeyMode& mode,
                        const TrainOptions& options, nn::Sgd<float>* optimizer) {
  if (hyper.batch_size == 0) throw ConfigError("batch size must be positive");
  if (train.size() < 2) throw ConfigError("training set needs at least two samples");
  if (train.sample_shape() != model.network().input_shape()) {
    throw ShapeError("training images " + nn::to_string(train.sample_shape()) +
                     " do not match network input " +
                     nn::to_string(model.network().input_shape()));
  }
  const nn::ShuffleBindings bindings = model.bindings(mode);
  nn::Sgd<float> local(hyper);
  nn::Sgd<float>& opt = optimizer != nullptr ? *optimizer : local;

  const std::size_t n = train.size();
  const std::size_t per_epoch = steps_per_epoch(n, hyper.batch_size);
  const std::size_t total = per_epoch * hyper.epochs;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainingLog log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    double lr = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * hyper.batch_size;
      const std::size_t end = std::min(begin + hyper.batch_size, n);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      nn::Tensor<float> batch = train.gather_images(rows);
      const std::vector<int> labels = train.gather_labels(rows);
      if (options.augment) data::augment_batch(batch, rng);

      const auto ce = nn::loss_and_grad(model.network(), batch, labels, bindings);
      lr = nn::cyclic_lr(step++, total, hyper.max_lr);
      opt.step(model.network(), lr);

      loss_sum += ce.loss * static_cast<double>(rows.size());
      correct += ce.correct;
      seen += rows.size();
    }
    EpochLog entry{epoch + 1, loss_sum / static_cast<double>(seen),
                   100.0 * static_cast<double>(correct) / static_cast<double>(seen), lr};
    log.epochs.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
  }
  return log;
}

TrainingLog train_protected(ProtectedModel& model, const data::Dataset& train,
                            const nn::SgdHyper& hyper, const TrainOptions& options,
                            nn::Sgd<float>* optimizer) {
  if (!model.is_protected()) throw ConfigError("model has no protected placement");
  if (!model.key()) throw ConfigError("no key bound to the model");
  return train_model(model, train, hyper, KeyMode::correct(), options, optimizer);
}

double accuracy(const nn::Network<float>& network, const data::Dataset& test,
                const nn::ShuffleBindings& bindings, std::size_t batch_size) {
  if (test.size() == 0) throw std::invalid_argument("empty evaluation set");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < test.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, test.size());
    rows.resize(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const auto predicted = nn::argmax_rows(network.infer(test.gather_images(rows), bindings));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (predicted[r] == test.labels[begin + r]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

double evaluate(const ProtectedModel& model, const data::Dataset& test,
                const KeyMode& mode, std::size_t batch_size) {
  return accuracy(model.network(), test, model.bindings(mode), batch_size);
}

}  // namespace keylock::net
