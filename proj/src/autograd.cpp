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

#include "deepunet/autograd.hpp"

#include <stdexcept>

namespace deepunet {

template <typename T>
bool Tape<T>::needs_grad(const std::vector<const BasicTensor<T>*>& inputs) {
  for (const auto* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void Tape<T>::record(std::string op, const std::vector<const BasicTensor<T>*>& inputs,
                     BasicTensor<T>& output, BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  for (const auto* t : inputs) {
    if (t == nullptr) continue;
    if (t->tape() != nullptr && t->tape() != this) {
      throw std::invalid_argument(node.op + ": input belongs to a different tape");
    }
    node.input_ids.push_back(t->tape() == this ? t->node_id() : -1);
  }
  node.output_id = static_cast<std::ptrdiff_t>(nodes_.size());
  node.output = output.storage();
  node.backward = std::move(backward);
  output.storage()->tape = this;
  output.storage()->node = node.output_id;
  output.storage()->requires_grad = true;
  nodes_.push_back(std::move(node));
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (loss.tape() != this || loss.node_id() < 0) {
    throw std::invalid_argument("backward: tensor was not produced on this tape");
  }
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + loss.shape().str());
  }
  auto& seed = loss.storage()->grad;
  seed.assign(1, T(1));
  for (std::ptrdiff_t i = loss.node_id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.output->grad.empty()) continue;  // not on a path to the loss
    node.backward(node.output->grad);
  }
}

template <typename T>
void Tape<T>::clear() {
  for (auto& node : nodes_) {
    node.output->tape = nullptr;
    node.output->node = -1;
    node.output->softmax_logits.reset();
  }
  nodes_.clear();
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (loss.tape() == nullptr) {
    throw std::invalid_argument("backward on a detached tensor (no tape recorded it)");
  }
  loss.tape()->backward(loss);
}

template class Tape<float>;
template class Tape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace deepunet
