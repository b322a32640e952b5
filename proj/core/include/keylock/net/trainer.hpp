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
#include <vector>

#include "keylock/data/dataset.hpp"
#include "keylock/net/protected_model.hpp"
#include "keylock/nn/sgd.hpp"

namespace keylock::net {

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean training loss
  double accuracy = 0.0;  // training accuracy in percent, train-mode forward
  double lr = 0.0;        // rate used for the epoch's last step
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
};

struct TrainOptions {
  std::uint64_t seed = 0;  // batch order and augmentation
  bool augment = true;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Minibatch SGD with the cyclic schedule over hyper.epochs passes. The
/// slots run under `mode`. A trailing batch of one sample is dropped so
/// batchnorm always sees at least two. Passing `optimizer` lets a caller
/// keep the velocities.
TrainingLog train_model(ProtectedModel& model, const data::Dataset& train,
                        const nn::SgdHyper& hyper, const KeyMode& mode,
                        const TrainOptions& options = {},
                        nn::Sgd<float>* optimizer = nullptr);

/// train_model with the bound key. Throws ConfigError if the model has no
/// key bound or no protected placement.
TrainingLog train_protected(ProtectedModel& model, const data::Dataset& train,
                            const nn::SgdHyper& hyper, const TrainOptions& options = {},
                            nn::Sgd<float>* optimizer = nullptr);

/// Top-1 accuracy in percent under explicit bindings.
double accuracy(const nn::Network<float>& network, const data::Dataset& test,
                const nn::ShuffleBindings& bindings, std::size_t batch_size = 256);

/// Top-1 accuracy in percent with slots under `mode`.
double evaluate(const ProtectedModel& model, const data::Dataset& test,
                const KeyMode& mode, std::size_t batch_size = 256);

}  // namespace keylock::net
