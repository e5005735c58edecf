// Copyright 2026 deepunet contributors
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

// Raw NCHW kernels behind the differentiable ops.
//
// `deepunet::kernels` holds the OpenMP versions used everywhere at runtime.
// `deepunet::kernels::reference` holds direct serial loops with the same
// contracts; tests compare the two and bench/ times them against each other.
//
// Parallel loops never split a reduction across threads: each output element
// is summed in a fixed order, so results are bitwise identical for any
// OMP_NUM_THREADS. All backward kernels accumulate (+=) into their outputs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "deepunet/tensor.hpp"

namespace deepunet::kernels {

struct ConvGeometry {
  Shape input;   // (N, inC, H, W)
  Shape weight;  // (outC, inC, kH, kW)
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Throws std::invalid_argument naming both shapes when they disagree.
  void validate() const;
  Shape output() const;
};

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);

/// `dx` may be empty when the input needs no gradient.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias);

template <typename T>
void relu_forward(std::span<const T> x, std::span<T> out);
template <typename T>
void relu_backward(std::span<const T> x, std::span<const T> dout, std::span<T> dx);

template <typename T>
void add_forward(std::span<const T> a, std::span<const T> b, std::span<T> out);
template <typename T>
void accumulate(std::span<const T> src, std::span<T> dst);

/// `argmax` receives, per output element, the winning offset inside its
/// (n, c) input plane. Ties go to the first element in row-major order.
template <typename T>
void maxpool2x2_forward(const Shape& in, std::span<const T> x, std::span<T> out,
                        std::span<std::uint32_t> argmax);
template <typename T>
void maxpool2x2_backward(const Shape& in, std::span<const std::uint32_t> argmax,
                         std::span<const T> dout, std::span<T> dx);

template <typename T>
void upsample_nearest2x_forward(const Shape& in, std::span<const T> x, std::span<T> out);
template <typename T>
void upsample_nearest2x_backward(const Shape& in, std::span<const T> dout, std::span<T> dx);

template <typename T>
void softmax_channels_forward(const Shape& s, std::span<const T> logits, std::span<T> out);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias);
template <typename T>
void maxpool2x2_forward(const Shape& in, std::span<const T> x, std::span<T> out,
                        std::span<std::uint32_t> argmax);
template <typename T>
void maxpool2x2_backward(const Shape& in, std::span<const std::uint32_t> argmax,
                         std::span<const T> dout, std::span<T> dx);
template <typename T>
void upsample_nearest2x_forward(const Shape& in, std::span<const T> x, std::span<T> out);
template <typename T>
void upsample_nearest2x_backward(const Shape& in, std::span<const T> dout, std::span<T> dx);
template <typename T>
void softmax_channels_forward(const Shape& s, std::span<const T> logits, std::span<T> out);

}  // namespace reference
}  // namespace deepunet::kernels
