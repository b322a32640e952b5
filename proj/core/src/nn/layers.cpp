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

#include "keylock/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>


#include "gemm.hpp"

namespace keylock::nn {
namespace {


// Sum of f(i) over [0, n) in a fixed lane order, so the rounding does not
// depend on where the data happens to be aligned. The lanes vectorize.
template <typename T, typename F>
T lane_sum(std::size_t n, F f) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += f(i + l);
  }
  T total{};
  for (; i < n; ++i) total += f(i);
  for (std::size_t l = 0; l < kLanes; ++l) total += acc[l];
  return total;
}

void require_rank(const Shape& shape, std::size_t rank, std::string_view who) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(who) + " expects rank " + std::to_string(rank) +
                     " input, got " + to_string(shape));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, out_h, out_w, k, stride, pad;
  std::size_t patch() const { return channels * k * k; }
  std::size_t positions() const { return out_h * out_w; }
};

// Source offset inside a (C, H, W) frame for every (patch row, output
// position) of the im2col matrix. Taps that land in the padding point at
// offset C*H*W, one past the frame, where callers keep a zero.
std::vector<std::uint32_t> im2col_table(const ConvGeometry& g) {
  const std::size_t frame = g.channels * g.height * g.width;
  std::vector<std::uint32_t> table(g.patch() * g.positions());
  std::size_t t = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = ih >= 0 && ih < static_cast<long>(g.height) && iw >= 0 &&
                                iw < static_cast<long>(g.width);
            table[t++] = static_cast<std::uint32_t>(
                inside ? (c * g.height + static_cast<std::size_t>(ih)) * g.width +
                             static_cast<std::size_t>(iw)
                       : frame);
          }
        }
      }
    }
  }
  return table;
}

// col rows are `positions` long and `ld` apart. `frame` holds the image
// followed by one zero.
template <typename T>
void im2col(const T* frame, const std::vector<std::uint32_t>& table, std::size_t rows,
            std::size_t positions, T* col, std::size_t ld) {
  const std::uint32_t* idx = table.data();
  for (std::size_t r = 0; r < rows; ++r, idx += positions) {
    T* dst = col + r * ld;
    for (std::size_t p = 0; p < positions; ++p) dst[p] = frame[idx[p]];
  }
}

// Inverse scatter-add; `frame` needs the extra trailing slot.
template <typename T>
void col2im_add(const T* col, const std::vector<std::uint32_t>& table, std::size_t rows,
                std::size_t positions, std::size_t ld, T* frame) {
  const std::uint32_t* idx = table.data();
  for (std::size_t r = 0; r < rows; ++r, idx += positions) {
    const T* src = col + r * ld;
    for (std::size_t p = 0; p < positions; ++p) frame[idx[p]] += src[p];
  }
}

// Output columns [lo, hi) whose input column ow*stride + kj - pad is inside
// the image.
inline std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g,
                                                        std::size_t kj) {
  std::size_t lo = 0;
  if (g.pad > kj) lo = (g.pad - kj + g.stride - 1) / g.stride;
  std::size_t hi = 0;
  if (g.width + g.pad > kj) hi = (g.width + g.pad - kj - 1) / g.stride + 1;
  hi = std::min(hi, g.out_w);
  lo = std::min(lo, hi);
  return {lo, hi};
}

// Row-wise im2col for wide maps, where contiguous copies beat a gather.
template <typename T>
void im2col_rows(const T* image, const ConvGeometry& g, T* col, std::size_t ld) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = col + ((c * g.k + ki) * g.k + kj) * ld;
        const auto [lo, hi] = valid_columns(g, kj);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          std::fill(dst, dst + lo, T{0});
          std::fill(dst + hi, dst + g.out_w, T{0});
          const T* src = plane + ih * static_cast<long>(g.width) - static_cast<long>(g.pad) +
                         static_cast<long>(kj);
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.stride];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_rows_add(const T* col, const ConvGeometry& g, T* image, std::size_t ld) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((c * g.k + ki) * g.k + kj) * ld;
        const auto [lo, hi] = valid_columns(g, kj);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          T* dst = plane + ih * static_cast<long>(g.width) - static_cast<long>(g.pad) +
                   static_cast<long>(kj);
          const T* src = row + oh * g.out_w;
          if (g.stride == 1) {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] += src[ow];
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow * g.stride] += src[ow];
          }
        }
      }
    }
  }
}

// Narrow maps go through the gather table instead.
inline bool use_rows(const ConvGeometry& g) { return g.out_w >= 16; }

// Samples per GEMM: enough columns to keep the kernel busy.
inline std::size_t conv_chunk(std::size_t batch, std::size_t positions) {
  constexpr std::size_t kTargetColumns = 1024;
  const std::size_t chunk = (kTargetColumns + positions - 1) / positions;
  return std::max<std::size_t>(1, std::min(batch, chunk));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t pad, bool bias)
    : Layer<T>(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(this->name() + ".weight",
              Tensor<T>({out_channels, in_channels, kernel, kernel})),
      bias_(this->name() + ".bias", Tensor<T>({bias ? out_channels : 0})) {
  if (in_ == 0 || out_ == 0 || k_ == 0 || stride_ == 0) {
    throw ConfigError("conv2d '" + this->name() + "' has a zero extent");
  }
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& sample) const {
  require_rank(sample, 3, "conv2d");
  if (sample[0] != in_) {
    throw ShapeError("conv2d '" + this->name() + "' expects " +
                     std::to_string(in_) + " channels, got " +
                     to_string(sample));
  }
  if (sample[1] + 2 * pad_ < k_ || sample[2] + 2 * pad_ < k_) {
    throw ShapeError("conv2d '" + this->name() + "' kernel larger than input");
  }
  return {out_, (sample[1] + 2 * pad_ - k_) / stride_ + 1,
          (sample[2] + 2 * pad_ - k_) / stride_ + 1};
}

template <typename T>
void Conv2d<T>::initialize(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_ * k_ * k_);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (auto& w : weight_.value.values()) w = static_cast<T>(normal(rng));
  bias_.value.fill(T{0});
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& x, const ShuffleBindings&) const {
  require_rank(x.shape(), 4, "conv2d");
  const Shape out_sample = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t batch = x.dim(0);
  const ConvGeometry g{in_,         x.dim(2), x.dim(3), out_sample[1],
                       out_sample[2], k_,     stride_,  pad_};
  const std::size_t positions = g.positions();
  const std::size_t in_frame = in_ * g.height * g.width;
  Tensor<T> y({batch, out_, g.out_h, g.out_w});
  const std::size_t chunk = conv_chunk(batch, positions);
  std::vector<T> col(g.patch() * chunk * positions);
  std::vector<T> res(chunk > 1 ? out_ * chunk * positions : 0);
  const bool rows = use_rows(g);
  const auto table = rows ? std::vector<std::uint32_t>{} : im2col_table(g);
  std::vector<T> frame(rows ? 0 : in_frame + 1, T{0});
  for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
    const std::size_t s = std::min(chunk, batch - n0);
    const std::size_t ld = s * positions;
    for (std::size_t i = 0; i < s; ++i) {
      const T* image = x.data() + (n0 + i) * in_frame;
      if (rows) {
        im2col_rows(image, g, col.data() + i * positions, ld);
      } else {
        std::copy_n(image, in_frame, frame.data());
        im2col(frame.data(), table, g.patch(), positions, col.data() + i * positions, ld);
      }
    }
    if (s == 1) {
      T* dst = y.data() + n0 * out_ * positions;
      detail::gemm<T>(false, false, out_, ld, g.patch(), weight_.value.data(), g.patch(),
                      col.data(), ld, T{0}, dst, ld);
      if (has_bias_) {
        for (std::size_t o = 0; o < out_; ++o) {
          for (std::size_t p = 0; p < positions; ++p) dst[o * positions + p] += bias_.value[o];
        }
      }
      continue;
    }
    detail::gemm<T>(false, false, out_, ld, g.patch(), weight_.value.data(), g.patch(),
                    col.data(), ld, T{0}, res.data(), ld);
    for (std::size_t i = 0; i < s; ++i) {
      T* dst = y.data() + (n0 + i) * out_ * positions;
      for (std::size_t o = 0; o < out_; ++o) {
        const T* src = res.data() + o * ld + i * positions;
        const T b = has_bias_ ? bias_.value[o] : T{0};
        for (std::size_t p = 0; p < positions; ++p) dst[o * positions + p] = src[p] + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const ShuffleBindings& b) {
  input_ = x;
  return infer(x, b);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  const std::size_t batch = x.dim(0);
  const ConvGeometry g{in_,            x.dim(2), x.dim(3), grad_out.dim(2),
                       grad_out.dim(3), k_,      stride_,  pad_};
  if (grad_out.dim(0) != batch || grad_out.dim(1) != out_) {
    throw ShapeError("conv2d '" + this->name() + "' gradient shape mismatch");
  }
  const std::size_t positions = g.positions();
  const std::size_t in_frame = in_ * g.height * g.width;
  Tensor<T> dx(x.shape());
  const std::size_t chunk = conv_chunk(batch, positions);
  std::vector<T> col(g.patch() * chunk * positions);
  std::vector<T> dcol(g.patch() * chunk * positions);
  std::vector<T> gyb(chunk > 1 ? out_ * chunk * positions : 0);
  const bool rows = use_rows(g);
  const auto table = rows ? std::vector<std::uint32_t>{} : im2col_table(g);
  std::vector<T> frame(rows ? 0 : in_frame + 1, T{0});
  for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
    const std::size_t s = std::min(chunk, batch - n0);
    const std::size_t ld = s * positions;
    // One sample reads its gradient in place; several are staged side by side.
    const T* gy_ptr = grad_out.data() + n0 * out_ * positions;
    for (std::size_t i = 0; i < s; ++i) {
      const T* image = x.data() + (n0 + i) * in_frame;
      if (rows) {
        im2col_rows(image, g, col.data() + i * positions, ld);
      } else {
        std::copy_n(image, in_frame, frame.data());
        im2col(frame.data(), table, g.patch(), positions, col.data() + i * positions, ld);
      }
      if (s == 1) continue;
      const T* src = grad_out.data() + (n0 + i) * out_ * positions;
      for (std::size_t o = 0; o < out_; ++o) {
        std::copy_n(src + o * positions, positions, gyb.data() + o * ld + i * positions);
      }
    }
    if (s > 1) gy_ptr = gyb.data();
    detail::gemm<T>(false, true, out_, g.patch(), ld, gy_ptr, ld, col.data(), ld,
                    T{1}, weight_.grad.data(), g.patch());
    if (has_bias_) {
      for (std::size_t o = 0; o < out_; ++o) {
        const T* row = gy_ptr + o * ld;
        bias_.grad[o] += lane_sum<T>(ld, [row](std::size_t i) { return row[i]; });
      }
    }
    detail::gemm<T>(true, false, g.patch(), ld, out_, weight_.value.data(), g.patch(),
                    gy_ptr, ld, T{0}, dcol.data(), ld);
    for (std::size_t i = 0; i < s; ++i) {
      if (rows) {
        col2im_rows_add(dcol.data() + i * positions, g, dx.data() + (n0 + i) * in_frame, ld);
        continue;
      }
      std::fill(frame.begin(), frame.end(), T{0});
      col2im_add(dcol.data() + i * positions, table, g.patch(), positions, ld, frame.data());
      std::copy_n(frame.data(), in_frame, dx.data() + (n0 + i) * in_frame);
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels)
    : Layer<T>(std::move(name)),
      channels_(channels),
      gamma_(this->name() + ".gamma", Tensor<T>({channels}, T{1})),
      beta_(this->name() + ".beta", Tensor<T>({channels}, T{0})),
      running_mean_({channels}, T{0}),
      running_var_({channels}, T{1}) {}

template <typename T>
Shape BatchNorm2d<T>::output_shape(const Shape& sample) const {
  require_rank(sample, 3, "batchnorm2d");
  if (sample[0] != channels_) {
    throw ShapeError("batchnorm2d '" + this->name() + "' expects " +
                     std::to_string(channels_) + " channels, got " +
                     to_string(sample));
  }
  return sample;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::infer(const Tensor<T>& x,
                                const ShuffleBindings&) const {
  require_rank(x.shape(), 4, "batchnorm2d");
  output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t batch = x.dim(0);
  const std::size_t plane = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEps);
    const T scale = static_cast<T>(gamma_.value[c] * inv);
    const T shift = static_cast<T>(beta_.value[c] - running_mean_[c] * gamma_.value[c] * inv);
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = x.data() + (n * channels_ + c) * plane;
      T* dst = y.data() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, const ShuffleBindings&) {
  require_rank(x.shape(), 4, "batchnorm2d");
  output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t batch = x.dim(0);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(batch * plane);
  Tensor<T> y(x.shape());
  normalized_ = Tensor<T>(x.shape());
  inv_std_.assign(channels_, 0.0);
  for (std::size_t c = 0; c < channels_; ++c) {
    // Plane sums in T, accumulated across planes in double.
    double sum = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = x.data() + (n * channels_ + c) * plane;
      sum += lane_sum<T>(plane, [src](std::size_t i) { return src[i]; });
    }
    const double mean = sum / count;
    const T m_t = static_cast<T>(mean);
    double sq = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = x.data() + (n * channels_ + c) * plane;
      sq += lane_sum<T>(plane, [src, m_t](std::size_t i) {
        const T d = src[i] - m_t;
        return d * d;
      });
    }
    const double var = sq / count;
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    const T m = static_cast<T>(mean);
    const T s = static_cast<T>(inv);
    const T g = gamma_.value[c];
    const T b = beta_.value[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels_ + c) * plane;
      const T* src = x.data() + base;
      T* xh = normalized_.data() + base;
      T* dst = y.data() + base;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - m) * s;
        dst[i] = g * xh[i] + b;
      }
    }
    const double unbiased = count > 1 ? sq / (count - 1) : var;
    running_mean_[c] = static_cast<T>((1 - kMomentum) * running_mean_[c] + kMomentum * mean);
    running_var_[c] = static_cast<T>((1 - kMomentum) * running_var_[c] + kMomentum * unbiased);
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = grad_out.dim(0);
  const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(batch * plane);
  Tensor<T> dx(grad_out.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double dgamma = 0.0;
    double dbeta = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels_ + c) * plane;
      const T* gy = grad_out.data() + base;
      const T* xh = normalized_.data() + base;
      dgamma += lane_sum<T>(plane, [gy, xh](std::size_t i) { return gy[i] * xh[i]; });
      dbeta += lane_sum<T>(plane, [gy](std::size_t i) { return gy[i]; });
    }
    gamma_.grad[c] += static_cast<T>(dgamma);
    beta_.grad[c] += static_cast<T>(dbeta);
    // dx = scale * (count * dy - dbeta - xhat * dgamma)
    const double scale = gamma_.value[c] * inv_std_[c] / count;
    const T a = static_cast<T>(scale * count);
    const T b = static_cast<T>(-scale * dbeta);
    const T d = static_cast<T>(-scale * dgamma);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels_ + c) * plane;
      const T* gy = grad_out.data() + base;
      const T* xh = normalized_.data() + base;
      T* dst = dx.data() + base;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = a * gy[i] + b + d * xh[i];
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(std::vector<NamedBuffer<T>>& out) {
  out.push_back({this->name() + ".running_mean", &running_mean_});
  out.push_back({this->name() + ".running_var", &running_var_});
}

// ------------------------------------------------------------------ Relu

template <typename T>
Tensor<T> Relu<T>::infer(const Tensor<T>& x, const ShuffleBindings&) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = std::max(v, T{0});
  return y;
}

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, const ShuffleBindings& b) {
  output_ = infer(x, b);
  return output_;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  const T* out = output_.data();
  T* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] = out[i] > T{0} ? d[i] : T{0};
  return dx;
}

// ------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(std::string name, std::size_t kernel, std::size_t stride)
    : Layer<T>(std::move(name)), k_(kernel), stride_(stride) {
  if (k_ == 0 || stride_ == 0) {
    throw ConfigError("maxpool2d '" + this->name() + "' has a zero extent");
  }
}

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& sample) const {
  require_rank(sample, 3, "maxpool2d");
  if (sample[1] < k_ || sample[2] < k_) {
    throw ShapeError("maxpool2d '" + this->name() + "' window larger than input " +
                     to_string(sample));
  }
  return {sample[0], (sample[1] - k_) / stride_ + 1,
          (sample[2] - k_) / stride_ + 1};
}

template <typename T>
Tensor<T> MaxPool2d<T>::pool(const Tensor<T>& x,
                             std::vector<std::size_t>* argmax) const {
  require_rank(x.shape(), 4, "maxpool2d");
  const Shape out = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  Tensor<T> y({x.dim(0), out[0], out[1], out[2]});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oh = 0; oh < out[1]; ++oh) {
      for (std::size_t ow = 0; ow < out[2]; ++ow, ++o) {
        std::size_t best = base + oh * stride_ * w + ow * stride_;
        for (std::size_t ki = 0; ki < k_; ++ki) {
          for (std::size_t kj = 0; kj < k_; ++kj) {
            const std::size_t idx = base + (oh * stride_ + ki) * w + ow * stride_ + kj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::infer(const Tensor<T>& x, const ShuffleBindings&) const {
  return pool(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, const ShuffleBindings&) {
  input_shape_ = x.shape();
  return pool(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(input_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
  return dx;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Shape GlobalAvgPool<T>::output_shape(const Shape& sample) const {
  require_rank(sample, 3, "global_avgpool");
  return {sample[0]};
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::infer(const Tensor<T>& x,
                                  const ShuffleBindings&) const {
  require_rank(x.shape(), 4, "global_avgpool");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double sum = 0.0;
    const T* src = x.data() + p * area;
    for (std::size_t i = 0; i < area; ++i) sum += src[i];
    y[p] = static_cast<T>(sum / static_cast<double>(area));
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, const ShuffleBindings& b) {
  input_shape_ = x.shape();
  return infer(x, b);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(input_shape_);
  const std::size_t area = input_shape_[2] * input_shape_[3];
  const T scale = T{1} / static_cast<T>(area);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const T g = grad_out[p] * scale;
    std::fill(dx.data() + p * area, dx.data() + (p + 1) * area, g);
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features,
                  std::size_t out_features)
    : Layer<T>(std::move(name)),
      in_(in_features),
      out_(out_features),
      weight_(this->name() + ".weight", Tensor<T>({out_features, in_features})),
      bias_(this->name() + ".bias", Tensor<T>({out_features})) {
  if (in_ == 0 || out_ == 0) {
    throw ConfigError("linear '" + this->name() + "' has a zero extent");
  }
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& sample) const {
  if (element_count(sample) != in_) {
    throw ShapeError("linear '" + this->name() + "' expects " +
                     std::to_string(in_) + " features, got " + to_string(sample));
  }
  return {out_};
}

template <typename T>
void Linear<T>::initialize(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (auto& w : weight_.value.values()) w = static_cast<T>(uniform(rng));
  for (auto& b : bias_.value.values()) b = static_cast<T>(uniform(rng));
}

template <typename T>
Tensor<T> Linear<T>::infer(const Tensor<T>& x, const ShuffleBindings&) const {
  if (x.rank() < 2) throw ShapeError("linear expects a batch axis");
  const std::size_t batch = x.dim(0);
  if (x.size() != batch * in_) {
    throw ShapeError("linear '" + this->name() + "' expects " +
                     std::to_string(in_) + " features per sample, got " +
                     to_string(x.shape()));
  }
  Tensor<T> y({batch, out_});
  detail::gemm<T>(false, true, batch, out_, in_, x.data(), in_, weight_.value.data(), in_,
                  T{0}, y.data(), out_);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_; ++o) y[n * out_ + o] += bias_.value[o];
  return y;
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, const ShuffleBindings& b) {
  input_ = x;
  return infer(x, b);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = input_.dim(0);
  const T* gy = grad_out.data();
  detail::gemm<T>(true, false, out_, in_, batch, gy, out_, input_.data(), in_, T{1},
                  weight_.grad.data(), in_);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += gy[n * out_ + o];
  Tensor<T> dx(input_.shape());
  detail::gemm<T>(false, false, batch, in_, out_, gy, out_, weight_.value.data(), in_, T{0},
                  dx.data(), in_);
  return dx;
}

template <typename T>
void Linear<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// --------------------------------------------------------- ResidualBlock

template <typename T>
ResidualBlock<T>::ResidualBlock(std::string name, std::size_t in_channels,
                                std::size_t out_channels, std::size_t stride)
    : Layer<T>(std::move(name)),
      projection_(stride != 1 || in_channels != out_channels),
      conv1_(this->name() + ".conv1", in_channels, out_channels, 3, stride, 1, false),
      bn1_(this->name() + ".bn1", out_channels),
      relu1_(this->name() + ".relu1"),
      conv2_(this->name() + ".conv2", out_channels, out_channels, 3, 1, 1, false),
      bn2_(this->name() + ".bn2", out_channels),
      relu_out_(this->name() + ".relu") {
  if (projection_) {
    short_conv_.emplace(this->name() + ".shortcut.conv", in_channels,
                        out_channels, 1, stride, 0, false);
    short_bn_.emplace(this->name() + ".shortcut.bn", out_channels);
  }
}

template <typename T>
void ResidualBlock<T>::initialize(std::mt19937_64& rng) {
  conv1_.initialize(rng);
  conv2_.initialize(rng);
  if (projection_) short_conv_->initialize(rng);
}

template <typename T>
Shape ResidualBlock<T>::output_shape(const Shape& sample) const {
  return bn2_.output_shape(conv2_.output_shape(conv1_.output_shape(sample)));
}

template <typename T>
Tensor<T> ResidualBlock<T>::infer(const Tensor<T>& x,
                                  const ShuffleBindings& b) const {
  Tensor<T> main = bn2_.infer(
      conv2_.infer(relu1_.infer(bn1_.infer(conv1_.infer(x, b), b), b), b), b);
  if (projection_) {
    const Tensor<T> s = short_bn_->infer(short_conv_->infer(x, b), b);
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += s[i];
  } else {
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += x[i];
  }
  return relu_out_.infer(main, b);
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, const ShuffleBindings& b) {
  Tensor<T> main = bn2_.forward(
      conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(x, b), b), b), b),
      b);
  if (projection_) {
    const Tensor<T> s = short_bn_->forward(short_conv_->forward(x, b), b);
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += s[i];
  } else {
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += x[i];
  }
  return relu_out_.forward(main, b);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = relu_out_.backward(grad_out);
  Tensor<T> dx = conv1_.backward(
      bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
  if (projection_) {
    const Tensor<T> ds = short_conv_->backward(short_bn_->backward(g));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  }
  return dx;
}

template <typename T>
void ResidualBlock<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  conv1_.collect_parameters(out);
  bn1_.collect_parameters(out);
  conv2_.collect_parameters(out);
  bn2_.collect_parameters(out);
  if (projection_) {
    short_conv_->collect_parameters(out);
    short_bn_->collect_parameters(out);
  }
}

template <typename T>
void ResidualBlock<T>::collect_buffers(std::vector<NamedBuffer<T>>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
  if (projection_) short_bn_->collect_buffers(out);
}

// ----------------------------------------------------------- ShuffleSlot

template <typename T>
Tensor<T> ShuffleSlot<T>::infer(const Tensor<T>& x,
                                const ShuffleBindings& bindings) const {
  const auto plan = bindings.find(placement_);
  if (!plan) return x;
  require_rank(x.shape(), 4, "block_shuffle");
  if (x.dim(1) != plan->spec().channels || x.dim(2) != plan->height() ||
      x.dim(3) != plan->width()) {
    throw ShapeError("placement '" + placement_ + "' feature map " +
                     to_string(x.shape()) + " does not match its bound plan");
  }
  Tensor<T> y(x.shape());
  plan->apply<T>(x.values(), y.values());
  return y;
}

template <typename T>
Tensor<T> ShuffleSlot<T>::forward(const Tensor<T>& x,
                                  const ShuffleBindings& bindings) {
  active_ = bindings.find(placement_);
  return infer(x, bindings);
}

template <typename T>
Tensor<T> ShuffleSlot<T>::backward(const Tensor<T>& grad_out) {
  if (!active_) return grad_out;
  Tensor<T> dx(grad_out.shape());
  active_->invert<T>(grad_out.values(), dx.values());
  return dx;
}

// ------------------------------------------------------- ShuffleBindings

void ShuffleBindings::bind(std::string placement,
                           std::shared_ptr<const shuffle::BlockShufflePlan> plan) {
  for (auto& [name, existing] : entries_) {
    if (name == placement) {
      existing = std::move(plan);
      return;
    }
  }
  entries_.emplace_back(std::move(placement), std::move(plan));
}

std::shared_ptr<const shuffle::BlockShufflePlan> ShuffleBindings::find(
    std::string_view placement) const {
  for (const auto& [name, plan] : entries_)
    if (name == placement) return plan;
  return nullptr;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool2d<float>;
template class MaxPool2d<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Linear<float>;
template class Linear<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class ShuffleSlot<float>;
template class ShuffleSlot<double>;

}  // namespace keylock::nn
