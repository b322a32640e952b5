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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "keylock/errors.hpp"
#include "keylock/nn/gradcheck.hpp"
#include "keylock/shuffle/block_shuffle.hpp"
#include "keylock/shuffle/key_space.hpp"
#include "keylock/shuffle/permutation.hpp"
#include "keylock/shuffle/secret_key.hpp"
#include "support/factorial_oracle.hpp"

namespace {

using keylock::nn::Tensor;
using namespace keylock::shuffle;
using keylock::test_support::factorial_decimal;

SecretKey key0() { return SecretKey::from_hex("000102030405060708090a0b0c0d0e0f"); }

std::vector<std::size_t> read_fixture(const std::string& name) {
  std::ifstream in(std::string(KEYLOCK_FIXTURE_DIR) + "/" + name);
  EXPECT_TRUE(in) << name;
  std::vector<std::size_t> out;
  for (std::size_t x; in >> x;) out.push_back(x);
  return out;
}

PermutationVector random_perm(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  std::shuffle(v.begin(), v.end(), rng);
  return PermutationVector(v);
}

Tensor<double> random_tensor(const keylock::nn::Shape& shape, std::mt19937_64& rng) {
  Tensor<double> t(shape);
  std::normal_distribution<double> d;
  for (auto& x : t.values()) x = d(rng);
  return t;
}

// Cuts every block out as an explicit list, permutes it, and writes it back.
Tensor<double> brute_force_shuffle(const Tensor<double>& x, const PermutationVector& v,
                                   std::size_t m) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto at = [&](const Tensor<double>& t, std::size_t ch, std::size_t r, std::size_t col) {
    return t[(ch * h + r) * w + col];
  };
  Tensor<double> out(x.shape());
  for (std::size_t bi = 0; bi < h / m; ++bi) {
    for (std::size_t bj = 0; bj < w / m; ++bj) {
      std::vector<double> block;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t col = 0; col < m; ++col)
            block.push_back(at(x, ch, bi * m + r, bj * m + col));
      std::vector<double> shuffled(block.size());
      for (std::size_t k = 0; k < block.size(); ++k) shuffled[k] = block[v[k]];
      std::size_t k = 0;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t col = 0; col < m; ++col)
            out[(ch * h + bi * m + r) * w + bj * m + col] = shuffled[k++];
    }
  }
  return out;
}

// ----------------------------------------------------------------- keys

TEST(SecretKey, HexRoundTripAndFingerprint) {
  const SecretKey k = key0();
  EXPECT_EQ(k.hex(), "000102030405060708090a0b0c0d0e0f");
  EXPECT_EQ(k.fingerprint(), "be45cb26");  // sha256(seed)[:4] via hashlib
}

TEST(SecretKey, RejectsMalformedHex) {
  EXPECT_THROW(SecretKey::from_hex("00"), std::invalid_argument);
  EXPECT_THROW(SecretKey::from_hex("000102030405060708090A0B0C0D0E0F"), std::invalid_argument);
  EXPECT_THROW(parse_key_file("zz0102030405060708090a0b0c0d0e0f\n"), keylock::FormatError);
}

TEST(SecretKey, KeyFileCarriesOptionalLabel) {
  SecretKey k = key0();
  k.set_label("owner");
  const std::string text = format_key_file(k);
  EXPECT_EQ(text, "000102030405060708090a0b0c0d0e0f\nowner\n");
  const SecretKey back = parse_key_file(text);
  EXPECT_EQ(back, k);
  EXPECT_EQ(back.label(), "owner");
  EXPECT_EQ(parse_key_file("000102030405060708090a0b0c0d0e0f").label(), "");
}

// ------------------------------------------------------------ derivation

TEST(DerivePermutation, SingleElement) {
  EXPECT_EQ(derive_permutation(key0(), 1), PermutationVector::identity(1));
}

TEST(DerivePermutation, ZeroLengthIsAnError) {
  EXPECT_THROW(derive_permutation(key0(), 0), std::invalid_argument);
}

TEST(DerivePermutation, Deterministic) {
  EXPECT_EQ(derive_permutation(key0(), 256), derive_permutation(key0(), 256));
  const SecretKey same(key0().seed(), "other label");
  EXPECT_EQ(derive_permutation(same, 256), derive_permutation(key0(), 256));
}

TEST(DerivePermutation, IsBijection) {
  const auto v = derive_permutation(key0(), 12);
  std::vector<std::size_t> sorted(v.indices().begin(), v.indices().end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(DerivePermutation, MatchesGoldenFixtures) {
  for (std::size_t n : {12u, 256u}) {
    const auto golden = read_fixture("perm_k0_n" + std::to_string(n) + ".txt");
    ASSERT_EQ(golden.size(), n);
    EXPECT_EQ(derive_permutation(key0(), n), PermutationVector(golden)) << "n=" << n;
  }
}

TEST(DerivePermutation, DomainSeparatedByLength) {
  // The n=13 vector is not the n=12 one with 12 appended somewhere.
  const auto a = derive_permutation(key0(), 12);
  const auto b = derive_permutation(key0(), 13);
  std::vector<std::size_t> filtered;
  for (auto x : b.indices())
    if (x != 12) filtered.push_back(x);
  EXPECT_NE(PermutationVector(filtered), a);
}

TEST(DerivePermutation, DifferentKeysDiffer) {
  std::mt19937_64 rng(5);
  const auto k1 = SecretKey::random(rng);
  const auto k2 = SecretKey::random(rng);
  EXPECT_NE(derive_permutation(k1, 64), derive_permutation(k2, 64));
}

TEST(PermutationVector, RejectsNonBijection) {
  EXPECT_THROW(PermutationVector({0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(PermutationVector({0, 3, 1}), std::invalid_argument);
}

TEST(PermutationVector, InverseComposesToIdentity) {
  std::mt19937_64 rng(2);
  const auto v = random_perm(40, rng);
  const auto inv = v.inverse();
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(inv[v[k]], k);
}

// ----------------------------------------------------------------- apply

TEST(BlockShuffle, IdentityLeavesInputUnchanged) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({3, 4, 6}, rng);
  const BlockSpec spec{2, 3};
  EXPECT_EQ(apply_block_shuffle(x, PermutationVector::identity(12), spec), x);
  EXPECT_EQ(invert_block_shuffle(x, PermutationVector::identity(12), spec), x);
}

TEST(BlockShuffle, ReversalOfSingleBlock) {
  const Tensor<double> x({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});  // a b c d
  const PermutationVector rev({3, 2, 1, 0});
  const auto y = apply_block_shuffle(x, rev, BlockSpec{2, 1});
  EXPECT_EQ(y, Tensor<double>({1, 2, 2}, {4.0, 3.0, 2.0, 1.0}));
  EXPECT_EQ(invert_block_shuffle(x, rev, BlockSpec{2, 1}), y);
}

TEST(BlockShuffle, MatchesBruteForceOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor({2, 4, 4}, rng);
    const auto v = random_perm(8, rng);
    EXPECT_EQ(apply_block_shuffle(x, v, BlockSpec{2, 2}), brute_force_shuffle(x, v, 2));
  }
  const auto x = random_tensor({3, 6, 9}, rng);
  const auto v = random_perm(27, rng);
  EXPECT_EQ(apply_block_shuffle(x, v, BlockSpec{3, 3}), brute_force_shuffle(x, v, 3));
}

TEST(BlockShuffle, BatchedInputShufflesEverySample) {
  std::mt19937_64 rng(4);
  const auto batch = random_tensor({3, 2, 4, 4}, rng);
  const auto v = random_perm(8, rng);
  const auto y = apply_block_shuffle(batch, v, BlockSpec{2, 2});
  for (std::size_t s = 0; s < 3; ++s) {
    Tensor<double> one({2, 4, 4});
    std::copy_n(batch.data() + s * 32, 32, one.data());
    const auto ref = brute_force_shuffle(one, v, 2);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(y[s * 32 + i], ref[i]);
  }
}

TEST(BlockShuffle, ShapeErrors) {
  const Tensor<double> x({2, 4, 6});
  EXPECT_THROW(apply_block_shuffle(x, PermutationVector::identity(7), BlockSpec{2, 2}),
               keylock::ShapeError);
  EXPECT_THROW(apply_block_shuffle(x, PermutationVector::identity(32), BlockSpec{4, 2}),
               keylock::ShapeError);  // 6 % 4 != 0
  EXPECT_THROW(apply_block_shuffle(x, PermutationVector::identity(12), BlockSpec{2, 3}),
               keylock::ShapeError);  // channel mismatch
  EXPECT_THROW(apply_block_shuffle(Tensor<double>({8}), PermutationVector::identity(4),
                                   BlockSpec{2, 1}),
               keylock::ShapeError);
  EXPECT_THROW((BlockSpec{0, 1}.validate(4, 4)), keylock::ShapeError);
}

TEST(BlockShuffle, RoundTripIsExact) {
  std::mt19937_64 rng(6);
  const auto x = random_tensor({4, 8, 8}, rng);
  const auto v = random_perm(16, rng);
  const BlockSpec spec{2, 4};
  EXPECT_EQ(invert_block_shuffle(apply_block_shuffle(x, v, spec), v, spec), x);
  EXPECT_EQ(apply_block_shuffle(invert_block_shuffle(x, v, spec), v, spec), x);
}

TEST(BlockShuffle, VjpIsInverse) {
  std::mt19937_64 rng(7);
  const auto g = random_tensor({2, 4, 4}, rng);
  const auto v = random_perm(8, rng);
  const BlockSpec spec{2, 2};
  EXPECT_EQ(shuffle_vjp(g, PermutationVector::identity(8), spec), g);
  EXPECT_EQ(shuffle_vjp(apply_block_shuffle(g, v, spec), v, spec), g);
}

TEST(BlockShuffle, VjpMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const auto x = random_tensor({2, 4, 4}, rng);
  const auto target = random_tensor({2, 4, 4}, rng);
  const auto v = random_perm(8, rng);
  const BlockSpec spec{2, 2};
  // L(x) = sum (shuffle(x) - t)^2, so dL/dy = 2 (y - t).
  auto loss = [&](std::span<const double> xs) {
    Tensor<double> in(x.shape(), std::vector<double>(xs.begin(), xs.end()));
    const auto y = apply_block_shuffle(in, v, spec);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return s;
  };
  auto y = apply_block_shuffle(x, v, spec);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.0 * (y[i] - target[i]);
  const auto analytic = shuffle_vjp(y, v, spec);
  const auto numeric = keylock::nn::numerical_gradient(loss, x.values(), 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, keylock::nn::relative_error(analytic[i], numeric[i]));
  EXPECT_LE(worst, 1e-6);
}

// ------------------------------------------------------------ key space

TEST(KeySpace, MatchesRepeatedMultiplicationOracle) {
  for (std::size_t c = 1; c <= 64; ++c) {
    for (std::size_t m = 1; c * m * m <= 64; ++m) {
      const BlockSpec spec{m, c};
      EXPECT_EQ(key_space(spec).str(), factorial_decimal(static_cast<unsigned>(c * m * m)))
          << "c=" << c << " M=" << m;
    }
  }
}

TEST(KeySpace, TableEntriesSymbolically) {
  EXPECT_EQ(key_space_symbol(BlockSpec{2, 3}), "12!");
  EXPECT_EQ(key_space_symbol(BlockSpec{4, 3}), "48!");
  EXPECT_EQ(key_space_symbol(BlockSpec{2, 64}), "256!");
  EXPECT_EQ(key_space_symbol(BlockSpec{2, 512}), "2048!");
  EXPECT_EQ(key_space(BlockSpec{2, 64}).str(), factorial_decimal(256));
  EXPECT_EQ(key_space(BlockSpec{2, 512}).str(), factorial_decimal(2048));
  EXPECT_EQ(key_space(BlockSpec{1, 1}), 1);
  EXPECT_THROW(key_space(BlockSpec{0, 1}), std::invalid_argument);
}

TEST(PairCount, SmallValues) {
  EXPECT_EQ(pair_count(12), 66);
  EXPECT_EQ(pair_count(2), 1);
  EXPECT_EQ(pair_count(256), 32640);
  EXPECT_THROW(pair_count(1), std::invalid_argument);
  EXPECT_THROW(pair_count(0), std::invalid_argument);
}

TEST(PairSet, LexicographicEnumeration) {
  std::vector<std::pair<std::size_t, std::size_t>> seen(PairSet(4).begin(), PairSet(4).end());
  const std::vector<std::pair<std::size_t, std::size_t>> want = {
      {0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  EXPECT_EQ(seen, want);
  for (std::size_t n : {0u, 1u}) EXPECT_EQ(PairSet(n).begin(), PairSet(n).end());
  std::size_t count = 0;
  for ([[maybe_unused]] auto p : PairSet(64)) ++count;
  EXPECT_EQ(count, 2016u);
  EXPECT_EQ(PairSet(64).size(), 2016u);
}

}  // namespace
