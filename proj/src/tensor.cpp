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

#include "deepunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deepunet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

template <typename T>
BasicTensor<T>::BasicTensor() : s_(std::make_shared<Storage>()) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : s_(std::make_shared<Storage>()) {
  s_->shape = shape;
  s_->data.assign(shape.numel(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage>()) {
  if (values.size() != shape.numel()) {
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape.str());
  }
  s_->shape = shape;
  s_->data = std::move(values);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{1, 1, 1, 1}, value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::wrap(std::shared_ptr<Storage> storage) {
  BasicTensor t;
  t.s_ = std::move(storage);
  return t;
}

template <typename T>
T& BasicTensor<T>::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  const Shape& s = s_->shape;
  return s_->data[((n * s.c + c) * s.h + y) * s.w + x];
}

template <typename T>
T BasicTensor<T>::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
  const Shape& s = s_->shape;
  return s_->data[((n * s.c + c) * s.h + y) * s.w + x];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (s_->data.size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + s_->shape.str());
  }
  return s_->data[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  s_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> BasicTensor<T>::ensure_grad() {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(s_->shape, s_->data);
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace deepunet
