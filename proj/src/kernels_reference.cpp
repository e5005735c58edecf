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

// Serial direct-loop kernels. Slow on purpose: no unfolding, no GEMM,
// accumulation in double.

#include <algorithm>
#include <cmath>
#include <vector>

#include "deepunet/kernels.hpp"

namespace deepunet::kernels::reference {

namespace {

bool input_pixel(const ConvGeometry& g, std::size_t o, std::size_t k, std::size_t extent,
                 std::size_t& i) {
  const auto pos = static_cast<std::ptrdiff_t>(o * g.stride + k) -
                   static_cast<std::ptrdiff_t>(g.padding);
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
  i = static_cast<std::size_t>(pos);
  return true;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const Shape is = g.input, ws = g.weight, os = g.output();
  for (std::size_t n = 0; n < os.n; ++n)
    for (std::size_t oc = 0; oc < os.c; ++oc)
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          double acc = bias[oc];
          for (std::size_t ic = 0; ic < is.c; ++ic)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                std::size_t iy, ix;
                if (!input_pixel(g, oy, ky, is.h, iy) || !input_pixel(g, ox, kx, is.w, ix)) continue;
                acc += static_cast<double>(x[((n * is.c + ic) * is.h + iy) * is.w + ix]) *
                       static_cast<double>(weight[((oc * ws.c + ic) * ws.h + ky) * ws.w + kx]);
              }
          out[((n * os.c + oc) * os.h + oy) * os.w + ox] = static_cast<T>(acc);
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias) {
  const Shape is = g.input, ws = g.weight, os = g.output();
  std::vector<double> gx(dx.empty() ? 0 : is.numel(), 0.0);
  std::vector<double> gw(ws.numel(), 0.0);
  std::vector<double> gb(ws.n, 0.0);
  for (std::size_t n = 0; n < os.n; ++n)
    for (std::size_t oc = 0; oc < os.c; ++oc)
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          const double d = dout[((n * os.c + oc) * os.h + oy) * os.w + ox];
          gb[oc] += d;
          for (std::size_t ic = 0; ic < is.c; ++ic)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                std::size_t iy, ix;
                if (!input_pixel(g, oy, ky, is.h, iy) || !input_pixel(g, ox, kx, is.w, ix)) continue;
                const std::size_t xi = ((n * is.c + ic) * is.h + iy) * is.w + ix;
                const std::size_t wi = ((oc * ws.c + ic) * ws.h + ky) * ws.w + kx;
                gw[wi] += d * static_cast<double>(x[xi]);
                if (!gx.empty()) gx[xi] += d * static_cast<double>(weight[wi]);
              }
        }
  for (std::size_t i = 0; i < gx.size(); ++i) dx[i] += static_cast<T>(gx[i]);
  for (std::size_t i = 0; i < gw.size(); ++i) dweight[i] += static_cast<T>(gw[i]);
  for (std::size_t i = 0; i < gb.size(); ++i) dbias[i] += static_cast<T>(gb[i]);
}

template <typename T>
void maxpool2x2_forward(const Shape& in, std::span<const T> x, std::span<T> out,
                        std::span<std::uint32_t> argmax) {
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  for (std::size_t p = 0; p < in.n * in.c; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = 0;
        bool first = true;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t i = (2 * oy + dy) * in.w + 2 * ox + dx;
            if (first || x[p * in.h * in.w + i] > x[p * in.h * in.w + best]) best = i;
            first = false;
          }
        out[(p * oh + oy) * ow + ox] = x[p * in.h * in.w + best];
        argmax[(p * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best);
      }
}

template <typename T>
void maxpool2x2_backward(const Shape& in, std::span<const std::uint32_t> argmax,
                         std::span<const T> dout, std::span<T> dx) {
  const std::size_t pooled = (in.h / 2) * (in.w / 2);
  for (std::size_t p = 0; p < in.n * in.c; ++p)
    for (std::size_t i = 0; i < pooled; ++i)
      dx[p * in.h * in.w + argmax[p * pooled + i]] += dout[p * pooled + i];
}

template <typename T>
void upsample_nearest2x_forward(const Shape& in, std::span<const T> x, std::span<T> out) {
  for (std::size_t p = 0; p < in.n * in.c; ++p)
    for (std::size_t y = 0; y < 2 * in.h; ++y)
      for (std::size_t xx = 0; xx < 2 * in.w; ++xx)
        out[(p * 2 * in.h + y) * 2 * in.w + xx] = x[(p * in.h + y / 2) * in.w + xx / 2];
}

template <typename T>
void upsample_nearest2x_backward(const Shape& in, std::span<const T> dout, std::span<T> dx) {
  for (std::size_t p = 0; p < in.n * in.c; ++p)
    for (std::size_t y = 0; y < 2 * in.h; ++y)
      for (std::size_t xx = 0; xx < 2 * in.w; ++xx)
        dx[(p * in.h + y / 2) * in.w + xx / 2] += dout[(p * 2 * in.h + y) * 2 * in.w + xx];
}

template <typename T>
void softmax_channels_forward(const Shape& s, std::span<const T> logits, std::span<T> out) {
  const std::size_t plane = s.h * s.w;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      double top = -INFINITY;
      for (std::size_t c = 0; c < s.c; ++c) top = std::max<double>(top, logits[(n * s.c + c) * plane + p]);
      double total = 0;
      for (std::size_t c = 0; c < s.c; ++c) total += std::exp(logits[(n * s.c + c) * plane + p] - top);
      for (std::size_t c = 0; c < s.c; ++c)
        out[(n * s.c + c) * plane + p] =
            static_cast<T>(std::exp(logits[(n * s.c + c) * plane + p] - top) / total);
    }
}

#define DEEPUNET_INSTANTIATE_REFERENCE(T)                                                        \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                            \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                   std::span<const T>, std::span<T>, std::span<T>,              \
                                   std::span<T>);                                               \
  template void maxpool2x2_forward<T>(const Shape&, std::span<const T>, std::span<T>,           \
                                      std::span<std::uint32_t>);                                \
  template void maxpool2x2_backward<T>(const Shape&, std::span<const std::uint32_t>,            \
                                       std::span<const T>, std::span<T>);                       \
  template void upsample_nearest2x_forward<T>(const Shape&, std::span<const T>, std::span<T>);  \
  template void upsample_nearest2x_backward<T>(const Shape&, std::span<const T>, std::span<T>); \
  template void softmax_channels_forward<T>(const Shape&, std::span<const T>, std::span<T>);

DEEPUNET_INSTANTIATE_REFERENCE(float)
DEEPUNET_INSTANTIATE_REFERENCE(double)

}  // namespace deepunet::kernels::reference
