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

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "deepunet/tensor.hpp"

namespace deepunet {

/// Records differentiable ops in execution order and replays them backwards.
///
/// Nodes are appended by the ops in ops.hpp when a tape is passed and at
/// least one input requires a gradient. Backward walks the nodes once, in
/// reverse, and accumulates into every input that requires a gradient.
template <typename T>
class Tape {
 public:
  using StoragePtr = std::shared_ptr<typename BasicTensor<T>::Storage>;
  using BackwardFn = std::function<void(std::span<const T> out_grad)>;

  struct Node {
    std::string op;
    std::vector<std::ptrdiff_t> input_ids;  // producing node, -1 for leaves
    std::ptrdiff_t output_id = -1;
    StoragePtr output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() { clear(); }

  static bool needs_grad(const std::vector<const BasicTensor<T>*>& inputs);

  /// Links `output` to this tape as the result of `op`.
  void record(std::string op, const std::vector<const BasicTensor<T>*>& inputs,
              BasicTensor<T>& output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf.
  void backward(const BasicTensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

  /// Detaches every recorded output and drops the nodes.
  void clear();

 private:
  std::vector<Node> nodes_;
};

/// Backpropagates from a scalar produced on a live tape.
template <typename T>
void backward(const BasicTensor<T>& loss);

}  // namespace deepunet
