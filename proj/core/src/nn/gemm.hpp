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
#include <type_traits>

#ifdef KEYLOCK_HAVE_CBLAS
#include <cblas.h>
#else
#include <Eigen/Core>
#endif

namespace keylock::nn::detail {

// C (m x n) = alpha * op(A) * op(B) + beta * C, all row-major.
// op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc) {
#ifdef KEYLOCK_HAVE_CBLAS
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const auto im = static_cast<blasint>(m), in = static_cast<blasint>(n),
             ik = static_cast<blasint>(k);
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, im, in, ik, 1.0f, a, static_cast<blasint>(lda), b,
                static_cast<blasint>(ldb), beta, c, static_cast<blasint>(ldc));
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, im, in, ik, 1.0, a, static_cast<blasint>(lda), b,
                static_cast<blasint>(ldb), beta, c, static_cast<blasint>(ldc));
  }
#else
  using Row = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  using CMap = Eigen::Map<const Row, 0, Stride>;
  using Map = Eigen::Map<Row, 0, Stride>;
  const auto ar = trans_a ? k : m, ac = trans_a ? m : k;
  const auto br = trans_b ? n : k, bc = trans_b ? k : n;
  CMap am(a, static_cast<Eigen::Index>(ar), static_cast<Eigen::Index>(ac),
          Stride(static_cast<Eigen::Index>(lda)));
  CMap bm(b, static_cast<Eigen::Index>(br), static_cast<Eigen::Index>(bc),
          Stride(static_cast<Eigen::Index>(ldb)));
  Map cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
         Stride(static_cast<Eigen::Index>(ldc)));
  if (beta == T{0}) cm.setZero();
  else if (beta != T{1}) cm *= beta;
  if (trans_a && trans_b) cm.noalias() += am.transpose() * bm.transpose();
  else if (trans_a) cm.noalias() += am.transpose() * bm;
  else if (trans_b) cm.noalias() += am * bm.transpose();
  else cm.noalias() += am * bm;
#endif
}

}  // namespace keylock::nn::detail
