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

// Differentiable ops. Every op takes an optional tape; with a tape and at
// least one input requiring a gradient, the op records its backward pass.
// Without a tape the op is a plain forward computation.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepunet/autograd.hpp"
#include "deepunet/tensor.hpp"

namespace deepunet::ops {

/// Cross-correlation with zero padding. `bias` has shape (outC, 1, 1, 1).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding,
                      Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input, Tape<T>* tape = nullptr);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::uint32_t> argmax;  // offset within each (n, c) input plane
};

template <typename T>
PoolResult<T> maxpool2x2(const BasicTensor<T>& input, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& input, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts, Tape<T>* tape = nullptr);

/// Channels [begin, end) of `input`.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t end,
                              Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape = nullptr);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input, Tape<T>* tape = nullptr);

/// Per-pixel distribution over channels, max-subtracted.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits, Tape<T>* tape = nullptr);

inline constexpr double kLogClamp = 1e-7;

/// Mean over pixels of -log(max(p[target], 1e-7)).
///
/// `target` holds one class id per pixel, (n, 1, h, w) laid out like
/// `probs`. When `probs` came from softmax_channels on the same tape, the
/// gradient goes straight to the logits as (p - onehot) / pixels. That is
/// the gradient of the unclamped loss; it keeps confidently wrong pixels
/// pulling on the logits.
template <typename T>
BasicTensor<T> cross_entropy_loss(const BasicTensor<T>& probs,
                                  std::span<const std::uint8_t> target,
                                  Tape<T>* tape = nullptr);

}  // namespace deepunet::ops
