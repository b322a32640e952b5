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

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "keylock/attack/attacks.hpp"
#include "keylock/errors.hpp"
#include "keylock/net/arch.hpp"
#include "keylock/net/trainer.hpp"
#include "keylock/shuffle/key_space.hpp"
#include "keylock/shuffle/permutation.hpp"
#include "support/tiny_models.hpp"
#include "support/toy_key_model.hpp"

namespace {

using namespace keylock;
using attack::AttackerView;
using net::ArchConfig;
using net::ArchPreset;
using net::KeyMode;
using net::ProtectedModel;

shuffle::SecretKey key_from(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return shuffle::SecretKey::random(rng);
}

const std::vector<std::string> kInitial = {"initial_conv"};

ProtectedModel micro_protected(std::uint64_t seed) {
  auto model = ProtectedModel::build(ArchConfig::defaults(ArchPreset::cnn_micro), seed);
  model.protect(kInitial, 2, key_from(seed));
  return model;
}

// ---------------------------------------------------------------- view

TEST(AttackerView, DropsTheKey) {
  const auto model = micro_protected(1);
  const AttackerView view(model, "initial_conv", data::synthetic_dataset(10, 10, 1, "a"));
  EXPECT_FALSE(view.model().key().has_value());
  EXPECT_TRUE(model.key().has_value());
  EXPECT_EQ(view.placement().channels, 8u);
  EXPECT_THROW(AttackerView(model, "nowhere", data::Dataset{}), ConfigError);
}

// ------------------------------------------------------ greedy search

TEST(GreedySearch, SingleElementHasNoSteps) {
  const auto trace = attack::greedy_pair_search(shuffle::PermutationVector::identity(1),
                                                [](const auto&) { return 50.0; });
  EXPECT_TRUE(trace.steps.empty());
  EXPECT_EQ(trace.final, shuffle::PermutationVector::identity(1));
}

TEST(GreedySearch, OneDecisionPerPairInOrder) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {2u, 5u, 12u}) {
    std::uniform_real_distribution<double> u(0, 100);
    const auto trace = attack::greedy_pair_search(shuffle::PermutationVector::identity(n),
                                                  [&](const auto&) { return u(rng); });
    ASSERT_EQ(trace.steps.size(), n * (n - 1) / 2);
    std::size_t k = 0;
    for (auto [i, j] : shuffle::PairSet(n)) {
      EXPECT_EQ(trace.steps[k].i, i);
      EXPECT_EQ(trace.steps[k].j, j);
      ++k;
    }
  }
}

TEST(GreedySearch, RevertsOnlyOnStrictDecrease) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(0, 4);  // coarse scores make ties common
  const auto trace = attack::greedy_pair_search(shuffle::PermutationVector::identity(10),
                                                [&](const auto&) { return 10.0 * u(rng); });
  double incumbent = trace.initial_accuracy;
  auto v = trace.initial;
  for (const auto& s : trace.steps) {
    EXPECT_EQ(s.accepted, s.candidate_accuracy >= incumbent);
    EXPECT_GE(s.accuracy, incumbent);
    incumbent = s.accepted ? s.candidate_accuracy : incumbent;
    EXPECT_EQ(s.accuracy, incumbent);
    if (s.accepted) v.swap(s.i, s.j);
  }
  EXPECT_EQ(trace.final, v);
  EXPECT_EQ(trace.final_accuracy, incumbent);
}

TEST(GreedySearch, FlatScoreKeepsEverySwap) {
  const auto start = shuffle::PermutationVector({3, 1, 0, 2});
  const auto trace = attack::greedy_pair_search(start, [](const auto&) { return 42.0; });
  auto v = start;
  for (const auto& s : trace.steps) {
    EXPECT_TRUE(s.accepted);
    v.swap(s.i, s.j);
  }
  EXPECT_EQ(trace.final, v);
  EXPECT_EQ(trace.final_accuracy, trace.initial_accuracy);
}

TEST(GreedySearch, ScoredPermutationsAreAlwaysBijections) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  attack::greedy_pair_search(shuffle::PermutationVector::identity(9), [&](const auto& v) {
    EXPECT_TRUE(shuffle::is_bijection(v.indices()));
    return u(rng);
  });
}

// ---------------------------------------------------- n = 4 toy model

TEST(ToyKeyProblem, ExactlyOnePermutationIsPerfect) {
  const auto p = test_support::make_toy_key_problem();
  std::array<std::size_t, 4> v = {0, 1, 2, 3};
  int perfect = 0;
  do {
    const double oracle = test_support::toy_accuracy_oracle(p, v);
    const shuffle::PermutationVector pv(std::vector<std::size_t>(v.begin(), v.end()));
    EXPECT_DOUBLE_EQ(attack::accuracy_with_permutation(p.model, "toy", 2, pv, p.data), oracle);
    if (oracle == 100.0) {
      ++perfect;
      EXPECT_EQ(pv, p.target);
    }
  } while (std::next_permutation(v.begin(), v.end()));
  EXPECT_EQ(perfect, 1);
}

TEST(ToyKeyProblem, GreedyStaysWithinExhaustiveOptimum) {
  const auto p = test_support::make_toy_key_problem();
  double best = 0.0;
  std::array<std::size_t, 4> v = {0, 1, 2, 3};
  do best = std::max(best, test_support::toy_accuracy_oracle(p, v));
  while (std::next_permutation(v.begin(), v.end()));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const AttackerView view(p.model, "toy", p.data);
    attack::KeyEstimationOptions opts;
    opts.block_size = 2;
    opts.seed = seed;
    const auto trace = attack::estimate_key(view, opts);
    ASSERT_EQ(trace.steps.size(), 6u);
    double prev = trace.initial_accuracy;
    for (const auto& s : trace.steps) {
      EXPECT_GE(s.accuracy, prev);
      prev = s.accuracy;
    }
    EXPECT_GE(trace.final_accuracy, trace.initial_accuracy);
    EXPECT_LE(trace.final_accuracy, best);
    std::array<std::size_t, 4> fin{};
    std::copy(trace.final.indices().begin(), trace.final.indices().end(), fin.begin());
    EXPECT_DOUBLE_EQ(trace.final_accuracy, test_support::toy_accuracy_oracle(p, fin));
    // The start is K''s own permutation.
    std::mt19937_64 rng(seed);
    EXPECT_EQ(trace.initial, shuffle::derive_permutation(shuffle::SecretKey::random(rng), 4));
  }
}

TEST(EstimateKey, EmptyAttackerSetIsAnError) {
  const auto p = test_support::make_toy_key_problem();
  data::Dataset empty;
  empty.images = nn::Tensor<float>({0, 1, 2, 2});
  const AttackerView view(p.model, "toy", empty);
  EXPECT_THROW(attack::estimate_key(view, {}), std::invalid_argument);
}

TEST(EstimateKey, ConstantModelNeverMovesTheScore) {
  auto model = micro_protected(4);
  for (auto* p : model.network().parameters())
    if (p->name.rfind("fc.", 0) == 0) p->value.fill(0.0f);
  const AttackerView view(model, "initial_conv", data::synthetic_dataset(20, 10, 4, "a"));
  attack::KeyEstimationOptions opts;
  opts.seed = 4;
  const auto trace = attack::estimate_key(view, opts);
  EXPECT_EQ(trace.steps.size(), 496u);  // n = 8 channels * 2 * 2 = 32
  for (const auto& s : trace.steps) EXPECT_TRUE(s.accepted);
  EXPECT_EQ(trace.final_accuracy, trace.initial_accuracy);
}

TEST(PlacementScorer, AgreesWithFullEvaluation) {
  const auto model = micro_protected(5);
  const auto ds = data::synthetic_dataset(30, 10, 5, "a");
  const attack::PlacementScorer scorer(model, "initial_conv", 2, ds, 7);
  EXPECT_EQ(scorer.vector_length(), 32u);
  const auto v = shuffle::derive_permutation(key_from(9), 32);
  nn::ShuffleBindings b;
  b.bind("initial_conv", model.make_plan(model.active()[0], v));
  EXPECT_DOUBLE_EQ(scorer(v), net::accuracy(model.network(), ds, b));
  EXPECT_DOUBLE_EQ(scorer(v), attack::accuracy_with_permutation(model, "initial_conv", 2, v, ds));
}

// --------------------------------------------------------- fine-tuning

TEST(Finetune, ZeroEpochsEqualsNoTransformAccuracy) {
  const auto model = micro_protected(6);
  const auto test = data::synthetic_dataset(40, 10, 6, "test");
  const AttackerView view(model, "initial_conv", data::synthetic_dataset(20, 10, 7, "a"));
  nn::SgdHyper h;
  h.epochs = 0;
  const auto r = attack::finetune_attack(view, test, h);
  EXPECT_TRUE(r.trajectory.empty());
  EXPECT_EQ(r.final_accuracy, net::evaluate(model, test, KeyMode::none()));
  EXPECT_EQ(r.initial_accuracy, r.final_accuracy);
}

TEST(Finetune, TrajectoryHasOneEntryPerEpoch) {
  const auto model = micro_protected(7);
  const auto test = data::synthetic_dataset(20, 10, 6, "test");
  const AttackerView view(model, "initial_conv", data::synthetic_dataset(20, 10, 7, "a"));
  nn::SgdHyper h;
  h.epochs = 3;
  h.batch_size = 8;
  const auto r = attack::finetune_attack(view, test, h);
  ASSERT_EQ(r.trajectory.size(), 3u);
  EXPECT_EQ(r.trajectory.back(), r.final_accuracy);
}

TEST(Finetune, ZeroLearningRateLeavesParametersBitIdentical) {
  auto model = ProtectedModel::build(ArchConfig{}, 8);  // batchnorm included
  model.protect(kInitial, 2, key_from(8));
  const auto test = data::synthetic_dataset(10, 10, 8, "test");
  const AttackerView view(model, "initial_conv", data::synthetic_dataset(20, 10, 9, "a"));
  nn::SgdHyper h;
  h.epochs = 2;
  h.batch_size = 8;
  h.max_lr = 0.0;
  ProtectedModel tuned;
  attack::finetune_attack(view, test, h, {}, &tuned);
  const auto before = model.network().parameters();
  const auto after = tuned.network().parameters();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i]->value, after[i]->value);
}

TEST(Finetune, RandomKeyModeReportsItsKey) {
  const auto model = micro_protected(9);
  const auto test = data::synthetic_dataset(20, 10, 6, "test");
  const AttackerView view(model, "initial_conv", data::synthetic_dataset(20, 10, 7, "a"));
  nn::SgdHyper h;
  h.epochs = 1;
  h.batch_size = 8;
  attack::FinetuneOptions opts;
  opts.transform = attack::FinetuneTransform::random_key;
  const auto r = attack::finetune_attack(view, test, h, opts);
  ASSERT_TRUE(r.random_key_fingerprint.has_value());
  EXPECT_EQ(r.random_key_fingerprint->size(), 8u);
  EXPECT_EQ(attack::parse_finetune_transform("random-key"), attack::FinetuneTransform::random_key);
  EXPECT_EQ(attack::to_string(attack::FinetuneTransform::bypass), "bypass");
  EXPECT_THROW(attack::parse_finetune_transform("keep"), ConfigError);
}

// --------------------------------------------------------- random keys

TEST(RandomKeys, TrueKeyIsResampled) {
  const auto model = micro_protected(10);
  const auto test = data::synthetic_dataset(20, 10, 6, "test");
  int calls = 0;
  const auto stats = attack::random_key_eval(model, test, 1, [&] {
    return calls++ == 0 ? *model.key() : key_from(1000);
  });
  EXPECT_EQ(stats.resampled, 1u);
  ASSERT_EQ(stats.fingerprints.size(), 1u);
  EXPECT_EQ(stats.fingerprints[0], key_from(1000).fingerprint());
}

TEST(RandomKeys, ConstantModelScoresThePriorWithZeroSpread) {
  auto model = micro_protected(11);
  for (auto* p : model.network().parameters())
    if (p->name.rfind("fc.", 0) == 0) p->value.fill(0.0f);
  const auto test = data::synthetic_dataset(50, 10, 6, "test");
  const auto stats = attack::random_key_eval(model, test, 5, 3);
  EXPECT_DOUBLE_EQ(stats.mean, 10.0);
  EXPECT_DOUBLE_EQ(stats.stddev, 0.0);
  EXPECT_EQ(stats.per_key.size(), 5u);
}

TEST(RandomKeys, ReproducibleUnderSeedAndNeedsAKey) {
  auto model = micro_protected(12);
  const auto test = data::synthetic_dataset(30, 10, 6, "test");
  const auto a = attack::random_key_eval(model, test, 4, 77);
  const auto b = attack::random_key_eval(model, test, 4, 77);
  EXPECT_EQ(a.per_key, b.per_key);
  EXPECT_EQ(a.fingerprints, b.fingerprints);
  EXPECT_THROW(attack::random_key_eval(model, test, 0, 1), std::invalid_argument);
  model.unbind_key();
  EXPECT_THROW(attack::random_key_eval(model, test, 1, 1), ConfigError);
}

}  // namespace
