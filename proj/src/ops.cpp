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

#include "deepunet/ops.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

#include "deepunet/kernels.hpp"

namespace deepunet::ops {

namespace {

template <typename T>
using StoragePtr = std::shared_ptr<typename BasicTensor<T>::Storage>;

template <typename T>
std::span<T> grad_of(typename BasicTensor<T>::Storage& s) {
  if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
  return s.grad;
}

template <typename T>
bool recording(Tape<T>* tape, const std::vector<const BasicTensor<T>*>& inputs) {
  return tape != nullptr && Tape<T>::needs_grad(inputs);
}

template <typename T>
void check_finite([[maybe_unused]] const BasicTensor<T>& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  assert(all_finite<T>(t.data()) && op);
#endif
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding,
                      Tape<T>* tape) {
  const kernels::ConvGeometry g{input.shape(), weight.shape(), stride, padding};
  g.validate();
  if (bias.numel() != weight.shape().n) {
    throw std::invalid_argument("conv2d: bias " + bias.shape().str() + " does not match weight " +
                                weight.shape().str());
  }
  BasicTensor<T> out(g.output());
  kernels::conv2d_forward<T>(g, input.data(), weight.data(), bias.data(), out.data());
  check_finite(out, "conv2d");

  if (recording(tape, {&input, &weight, &bias})) {
    StoragePtr<T> xs = input.storage(), ws = weight.storage(), bs = bias.storage();
    tape->record("conv2d", {&input, &weight, &bias}, out, [g, xs, ws, bs](std::span<const T> dout) {
      std::span<T> dx = xs->requires_grad ? grad_of<T>(*xs) : std::span<T>{};
      std::vector<T> scratch_w, scratch_b;
      std::span<T> dw, db;
      if (ws->requires_grad) {
        dw = grad_of<T>(*ws);
      } else {
        scratch_w.assign(ws->data.size(), T(0));
        dw = scratch_w;
      }
      if (bs->requires_grad) {
        db = grad_of<T>(*bs);
      } else {
        scratch_b.assign(bs->data.size(), T(0));
        db = scratch_b;
      }
      kernels::conv2d_backward<T>(g, xs->data, ws->data, dout, dx, dw, db);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input, Tape<T>* tape) {
  BasicTensor<T> out(input.shape());
  kernels::relu_forward<T>(input.data(), out.data());
  if (recording(tape, {&input})) {
    StoragePtr<T> xs = input.storage();
    tape->record("relu", {&input}, out, [xs](std::span<const T> dout) {
      kernels::relu_backward<T>(xs->data, dout, grad_of<T>(*xs));
    });
  }
  return out;
}

template <typename T>
PoolResult<T> maxpool2x2(const BasicTensor<T>& input, Tape<T>* tape) {
  const Shape in = input.shape();
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: odd spatial extent in " + in.str());
  }
  PoolResult<T> r{BasicTensor<T>(Shape{in.n, in.c, in.h / 2, in.w / 2}), {}};
  r.argmax.resize(r.output.numel());
  kernels::maxpool2x2_forward<T>(in, input.data(), r.output.data(), r.argmax);
  if (recording(tape, {&input})) {
    StoragePtr<T> xs = input.storage();
    tape->record("maxpool2x2", {&input}, r.output,
                 [in, xs, argmax = r.argmax](std::span<const T> dout) {
                   kernels::maxpool2x2_backward<T>(in, argmax, dout, grad_of<T>(*xs));
                 });
  }
  return r;
}

template <typename T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& input, Tape<T>* tape) {
  const Shape in = input.shape();
  BasicTensor<T> out(Shape{in.n, in.c, 2 * in.h, 2 * in.w});
  kernels::upsample_nearest2x_forward<T>(in, input.data(), out.data());
  if (recording(tape, {&input})) {
    StoragePtr<T> xs = input.storage();
    tape->record("upsample_nearest2x", {&input}, out, [in, xs](std::span<const T> dout) {
      kernels::upsample_nearest2x_backward<T>(in, dout, grad_of<T>(*xs));
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts, Tape<T>* tape) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape first = parts[0].shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw std::invalid_argument("concat_channels: " + s.str() + " does not match " + first.str());
    }
    channels += s.c;
  }
  const std::size_t plane = first.h * first.w;
  BasicTensor<T> out(Shape{first.n, channels, first.h, first.w});
  auto dst = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape().c * plane;
    for (std::size_t n = 0; n < first.n; ++n) {
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(n * block), block,
                  dst.begin() + static_cast<std::ptrdiff_t>(n * channels * plane + offset));
    }
    offset += block;
  }

  std::vector<const BasicTensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  if (recording(tape, inputs)) {
    std::vector<StoragePtr<T>> sources;
    for (const auto& p : parts) sources.push_back(p.storage());
    tape->record("concat_channels", inputs, out,
                 [sources, channels, plane, batch = first.n](std::span<const T> dout) {
                   std::size_t off = 0;
                   for (const auto& s : sources) {
                     const std::size_t block = s->shape.c * plane;
                     if (s->requires_grad) {
                       auto g = grad_of<T>(*s);
                       for (std::size_t n = 0; n < batch; ++n) {
                         const T* src = dout.data() + n * channels * plane + off;
                         T* d = g.data() + n * block;
                         for (std::size_t i = 0; i < block; ++i) d[i] += src[i];
                       }
                     }
                     off += block;
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t end,
                              Tape<T>* tape) {
  const Shape in = input.shape();
  if (begin >= end || end > in.c) {
    throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") outside " + in.str());
  }
  const std::size_t plane = in.h * in.w;
  const std::size_t block = (end - begin) * plane;
  BasicTensor<T> out(Shape{in.n, end - begin, in.h, in.w});
  for (std::size_t n = 0; n < in.n; ++n) {
    std::copy_n(input.data().begin() + static_cast<std::ptrdiff_t>((n * in.c + begin) * plane),
                block, out.data().begin() + static_cast<std::ptrdiff_t>(n * block));
  }
  if (recording(tape, {&input})) {
    StoragePtr<T> xs = input.storage();
    tape->record("slice_channels", {&input}, out,
                 [xs, in, begin, block, plane](std::span<const T> dout) {
                   auto g = grad_of<T>(*xs);
                   for (std::size_t n = 0; n < in.n; ++n) {
                     T* d = g.data() + (n * in.c + begin) * plane;
                     const T* src = dout.data() + n * block;
                     for (std::size_t i = 0; i < block; ++i) d[i] += src[i];
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  BasicTensor<T> out(a.shape());
  kernels::add_forward<T>(a.data(), b.data(), out.data());
  if (recording(tape, {&a, &b})) {
    StoragePtr<T> as = a.storage(), bs = b.storage();
    tape->record("add", {&a, &b}, out, [as, bs](std::span<const T> dout) {
      if (as->requires_grad) kernels::accumulate<T>(dout, grad_of<T>(*as));
      if (bs->requires_grad) kernels::accumulate<T>(dout, grad_of<T>(*bs));
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (recording(tape, {&a, &b})) {
    StoragePtr<T> as = a.storage(), bs = b.storage();
    tape->record("mul", {&a, &b}, out, [as, bs](std::span<const T> dout) {
      // Read both operands before writing either gradient (a and b may alias).
      std::vector<T> da(dout.size()), db(dout.size());
      for (std::size_t i = 0; i < dout.size(); ++i) {
        da[i] = dout[i] * bs->data[i];
        db[i] = dout[i] * as->data[i];
      }
      if (as->requires_grad) kernels::accumulate<T>(da, grad_of<T>(*as));
      if (bs->requires_grad) kernels::accumulate<T>(db, grad_of<T>(*bs));
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input, Tape<T>* tape) {
  double acc = 0;
  for (T v : input.data()) acc += v;
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc));
  if (recording(tape, {&input})) {
    StoragePtr<T> xs = input.storage();
    tape->record("sum", {&input}, out, [xs](std::span<const T> dout) {
      auto g = grad_of<T>(*xs);
      for (auto& v : g) v += dout[0];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits, Tape<T>* tape) {
  const Shape s = logits.shape();
  if (s.c < 2) throw std::invalid_argument("softmax_channels: need >= 2 channels, got " + s.str());
  BasicTensor<T> out(s);
  kernels::softmax_channels_forward<T>(s, logits.data(), out.data());
  if (recording(tape, {&logits})) {
    StoragePtr<T> xs = logits.storage();
    StoragePtr<T> ps = out.storage();
    std::weak_ptr<typename BasicTensor<T>::Storage> weak_out = ps;
    tape->record("softmax_channels", {&logits}, out, [xs, weak_out, s](std::span<const T> dout) {
      const auto ps = weak_out.lock();
      const std::size_t plane = s.h * s.w;
      auto g = grad_of<T>(*xs);
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t base = n * s.c * plane + p;
          T dot = 0;
          for (std::size_t c = 0; c < s.c; ++c) dot += ps->data[base + c * plane] * dout[base + c * plane];
          for (std::size_t c = 0; c < s.c; ++c) {
            g[base + c * plane] += ps->data[base + c * plane] * (dout[base + c * plane] - dot);
          }
        }
      }
    });
    out.storage()->softmax_logits = xs;
  }
  return out;
}

template <typename T>
BasicTensor<T> cross_entropy_loss(const BasicTensor<T>& probs, std::span<const std::uint8_t> target,
                                  Tape<T>* tape) {
  const Shape s = probs.shape();
  const std::size_t plane = s.h * s.w;
  const std::size_t pixels = s.n * plane;
  if (s.c != 2) throw std::invalid_argument("cross_entropy_loss: expected 2 channels, got " + s.str());
  if (target.size() != pixels) {
    throw std::invalid_argument("cross_entropy_loss: target has " + std::to_string(target.size()) +
                                " ids for probs " + s.str());
  }
  for (std::size_t i = 0; i < pixels; ++i) {
    if (target[i] >= s.c) {
      throw std::invalid_argument("cross_entropy_loss: class id " + std::to_string(target[i]) +
                                  " out of range at pixel " + std::to_string(i));
    }
  }
  const auto p = probs.data();
  double acc = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < plane; ++q) {
      const double pt = p[(n * s.c + target[n * plane + q]) * plane + q];
      acc -= std::log(std::max(pt, kLogClamp));
    }
  }
  auto loss = BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(pixels)));

  if (tape == nullptr || !probs.requires_grad()) return loss;
  std::vector<std::uint8_t> ids(target.begin(), target.end());
  StoragePtr<T> ps = probs.storage();
  if (auto logits_storage = ps->softmax_logits; logits_storage && probs.tape() == tape) {
    const auto logits = BasicTensor<T>::wrap(logits_storage);
    tape->record("softmax_cross_entropy", {&logits}, loss,
                 [ls = logits_storage, ps, ids = std::move(ids), s, plane](std::span<const T> dout) {
                   auto g = grad_of<T>(*ls);
                   const T scale = dout[0] / static_cast<T>(s.n * plane);
                   for (std::size_t n = 0; n < s.n; ++n) {
                     for (std::size_t q = 0; q < plane; ++q) {
                       const std::size_t id = ids[n * plane + q];
                       for (std::size_t c = 0; c < s.c; ++c) {
                         const std::size_t i = (n * s.c + c) * plane + q;
                         const T onehot = id == c ? T(1) : T(0);
                         g[i] += scale * (ps->data[i] - onehot);
                       }
                     }
                   }
                 });
  } else {
    tape->record("cross_entropy", {&probs}, loss,
                 [ps, ids = std::move(ids), s, plane](std::span<const T> dout) {
                   auto g = grad_of<T>(*ps);
                   const T scale = dout[0] / static_cast<T>(s.n * plane);
                   for (std::size_t n = 0; n < s.n; ++n) {
                     for (std::size_t q = 0; q < plane; ++q) {
                       const std::size_t i = (n * s.c + ids[n * plane + q]) * plane + q;
                       if (ps->data[i] > static_cast<T>(kLogClamp)) g[i] -= scale / ps->data[i];
                     }
                   }
                 });
  }
  return loss;
}

#define DEEPUNET_INSTANTIATE_OPS(T)                                                             \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                    const BasicTensor<T>&, std::size_t, std::size_t, Tape<T>*); \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&, Tape<T>*);                            \
  template PoolResult<T> maxpool2x2<T>(const BasicTensor<T>&, Tape<T>*);                       \
  template BasicTensor<T> upsample_nearest2x<T>(const BasicTensor<T>&, Tape<T>*);              \
  template BasicTensor<T> concat_channels<T>(std::span<const BasicTensor<T>>, Tape<T>*);       \
  template BasicTensor<T> slice_channels<T>(const BasicTensor<T>&, std::size_t, std::size_t,   \
                                            Tape<T>*);                                         \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);      \
  template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);      \
  template BasicTensor<T> sum<T>(const BasicTensor<T>&, Tape<T>*);                             \
  template BasicTensor<T> softmax_channels<T>(const BasicTensor<T>&, Tape<T>*);                \
  template BasicTensor<T> cross_entropy_loss<T>(const BasicTensor<T>&,                         \
                                                std::span<const std::uint8_t>, Tape<T>*);

DEEPUNET_INSTANTIATE_OPS(float)
DEEPUNET_INSTANTIATE_OPS(double)

}  // namespace deepunet::ops
