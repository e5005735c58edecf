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

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deepunet {

/// Extents of a rank-4 (batch, channels, height, width) array.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

template <typename T>
class Tape;

/// Dense NCHW tensor with width fastest.
///
/// A tensor is a handle: copies share storage. Values are treated as
/// immutable once an op has produced them; only gradients accumulate, and
/// the optimizer writes parameters in place between tapes.
template <typename T>
class BasicTensor {
 public:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    Tape<T>* tape = nullptr;
    std::ptrdiff_t node = -1;
    // Set on softmax outputs recorded on a tape so cross-entropy can route
    // its gradient straight to the logits.
    std::shared_ptr<Storage> softmax_logits;
  };

  BasicTensor();
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor scalar(T value);
  /// Handle onto existing storage (shares data, gradient and tape link).
  static BasicTensor wrap(std::shared_ptr<Storage> storage);

  const Shape& shape() const { return s_->shape; }
  std::size_t numel() const { return s_->data.size(); }
  bool empty() const { return s_->data.empty(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<T> grad() { return s_->grad; }
  std::span<const T> grad() const { return s_->grad; }
  /// Allocates a zero gradient if none exists yet.
  std::span<T> ensure_grad();
  void zero_grad();

  bool is_leaf() const { return s_->node < 0; }
  Tape<T>* tape() const { return s_->tape; }
  std::ptrdiff_t node_id() const { return s_->node; }

  /// Deep copy of values only; no gradient, no tape.
  BasicTensor clone() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(s_->data.begin(), s_->data.end());
    return BasicTensor<U>(s_->shape, std::move(out));
  }

  const std::shared_ptr<Storage>& storage() const { return s_; }
  bool shares_storage(const BasicTensor& other) const { return s_ == other.s_; }

 private:
  std::shared_ptr<Storage> s_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

/// True when every value is finite.
template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace deepunet
