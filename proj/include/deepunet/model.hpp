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

// The network: a 3-conv stem, depth-1 residual DownBlocks, depth UpBlocks fed
// by same-resolution skips, and a 1x1 two-class head.
//
//   stem:      3 -> wide -> wide -> narrow (3x3, ReLU between), pool
//   DownBlock: y = conv2(relu(conv1(x))) + x; skip = y; pool(y)
//   UpBlock:   u = up2x(prev); h = conv2(relu(conv1([u, skip]))) + u
//   head:      1x1 narrow -> classes, softmax over channels
//
// With plus_enabled = false the "+ x" and "+ u" terms are dropped, which
// gives a U-Net-like network with identical shapes.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepunet/autograd.hpp"
#include "deepunet/tensor.hpp"

namespace deepunet {

struct ModelConfig {
  int depth = 7;
  int wide_channels = 64;
  int narrow_channels = 32;
  int input_channels = 3;
  int num_classes = 2;
  bool plus_enabled = true;

  void validate() const;
  /// Input height and width must be multiples of this.
  std::size_t input_multiple() const { return std::size_t{1} << depth; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ConvParams {
  BasicTensor<T> weight;  // (out, in, k, k)
  BasicTensor<T> bias;    // (out, 1, 1, 1)
  std::size_t padding = 1;
};

template <typename T>
struct BlockParams {
  ConvParams<T> conv1;
  ConvParams<T> conv2;
};

template <typename T>
struct BasicModel {
  ModelConfig config;
  std::vector<ConvParams<T>> stem;  // three convs
  std::vector<BlockParams<T>> down;  // depth - 1
  std::vector<BlockParams<T>> up;    // depth, deepest first
  ConvParams<T> head;

  /// Handles onto every parameter in a fixed order with stable names.
  std::vector<NamedTensor<T>> parameters() const;

  /// Deep copy in another precision (used for 64-bit gradient replay).
  template <typename U>
  BasicModel<U> cast() const;

  /// Deep copy in the same precision.
  BasicModel clone() const { return cast<T>(); }
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

/// He-normal weights (std sqrt(2 / fan_in)), zero biases; deterministic in seed.
Model build(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct DownOutput {
  BasicTensor<T> pooled;
  BasicTensor<T> skip;
};

template <typename T>
DownOutput<T> down_block_forward(const BasicTensor<T>& x, const BlockParams<T>& params,
                                 bool plus_enabled, Tape<T>* tape = nullptr);

template <typename T>
BasicTensor<T> up_block_forward(const BasicTensor<T>& prev, const BasicTensor<T>& skip,
                                const BlockParams<T>& params, bool plus_enabled,
                                Tape<T>* tape = nullptr);

/// Intermediate tensors captured by forward() when requested.
template <typename T>
struct ForwardTrace {
  std::vector<BasicTensor<T>> down_inputs;  // input of each DownBlock
  std::vector<BasicTensor<T>> skips;        // stem output, then each DownBlock's y
  std::vector<Shape> pooled;                // shape after each pooling stage
  std::vector<Shape> upsampled;             // shape after each upsampling stage
  BasicTensor<T> innermost;
};

template <typename T>
BasicTensor<T> forward_logits(const BasicModel<T>& model, const BasicTensor<T>& image,
                              Tape<T>* tape = nullptr, ForwardTrace<T>* trace = nullptr);

/// Per-pixel class probabilities, shape (N, classes, H, W).
template <typename T>
BasicTensor<T> forward(const BasicModel<T>& model, const BasicTensor<T>& image,
                       Tape<T>* tape = nullptr, ForwardTrace<T>* trace = nullptr);

std::size_t parameter_count(const ModelConfig& config);

enum class LayerKind { Conv, Pool, Upsample };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  int kernel = 3;
  int out_channels = 0;  // 0 for pool / upsample
  std::string stage;     // "down" or "up"
};

/// Main-path layers in execution order, named conv0_0 ... Pooling0 ...
/// UpsampleK ... .
std::vector<LayerSpec> layer_table(const ModelConfig& config);

/// Side length of the theoretical receptive field, via r += (k-1)*j with
/// j doubling at pools and halving at upsamples.
double receptive_field(const std::vector<LayerSpec>& layers);
double receptive_field(const ModelConfig& config);

}  // namespace deepunet
