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

#include "deepunet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace deepunet::kernels {

void ConvGeometry::validate() const {
  if (input.c != weight.c) {
    throw std::invalid_argument("conv2d: input " + input.str() + " has " + std::to_string(input.c) +
                                " channels but weight " + weight.str() + " expects " +
                                std::to_string(weight.c));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  const std::size_t ph = input.h + 2 * padding;
  const std::size_t pw = input.w + 2 * padding;
  if (ph < weight.h || pw < weight.w) {
    throw std::invalid_argument("conv2d: kernel " + weight.str() + " larger than padded input " +
                                input.str());
  }
  if ((ph - weight.h) % stride != 0 || (pw - weight.w) % stride != 0) {
    throw std::invalid_argument("conv2d: output extent of input " + input.str() + " with kernel " +
                                weight.str() + ", stride " + std::to_string(stride) +
                                " is not an integer");
  }
}

Shape ConvGeometry::output() const {
  return Shape{input.n, weight.n, (input.h + 2 * padding - weight.h) / stride + 1,
               (input.w + 2 * padding - weight.w) / stride + 1};
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements per work item. Band height depends
// only on the layer shape, never on the thread count.
constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

struct Bands {
  std::size_t rows = 1;
  std::size_t count = 1;
};

Bands make_bands(const ConvGeometry& g, const Shape& out) {
  const std::size_t k = g.weight.c * g.weight.h * g.weight.w;
  Bands b;
  b.rows = std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(1, k * out.w), 1, out.h);
  b.count = (out.h + b.rows - 1) / b.rows;
  return b;
}

bool is_pointwise(const ConvGeometry& g) {
  return g.weight.h == 1 && g.weight.w == 1 && g.stride == 1 && g.padding == 0;
}

// Range of output columns whose input column ox*stride + kx - pad is inside [0, width).
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx,
                                                  std::size_t out_w) {
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.padding);
  const auto width = static_cast<std::ptrdiff_t>(g.input.w);
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t hi = width - off <= 0 ? 0 : (width - off + s - 1) / s;
  lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(out_w));
  hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(out_w));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Unfolds output rows [y0, y1) of one image into a (inC*kH*kW) x band matrix.
template <typename T>
void im2col(const ConvGeometry& g, const Shape& out, const T* x, std::size_t y0, std::size_t y1,
            T* col) {
  const std::size_t height = g.input.h, width = g.input.w;
  const std::size_t kh = g.weight.h, kw = g.weight.w;
  const std::size_t band = (y1 - y0) * out.w;
  for (std::size_t ci = 0; ci < g.input.c; ++ci) {
    const T* plane = x + ci * height * width;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((ci * kh + ky) * kw + kx) * band;
        const auto [lo, hi] = valid_columns(g, kx, out.w);
        for (std::size_t oy = y0; oy < y1; ++oy) {
          T* dst = row + (oy - y0) * out.w;
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(dst, dst + out.w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * width;
          std::fill(dst, dst + lo, T(0));
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) -
                                       static_cast<std::ptrdiff_t>(g.padding);
          if (g.stride == 1) {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox + shift];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + shift];
          }
          std::fill(dst + hi, dst + out.w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters a column matrix back onto one image, adding.
template <typename T>
void col2im(const ConvGeometry& g, const Shape& out, const T* col, std::size_t y0, std::size_t y1,
            T* dx) {
  const std::size_t height = g.input.h, width = g.input.w;
  const std::size_t kh = g.weight.h, kw = g.weight.w;
  const std::size_t band = (y1 - y0) * out.w;
  for (std::size_t ci = 0; ci < g.input.c; ++ci) {
    T* plane = dx + ci * height * width;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((ci * kh + ky) * kw + kx) * band;
        const auto [lo, hi] = valid_columns(g, kx, out.w);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) -
                                     static_cast<std::ptrdiff_t>(g.padding);
        for (std::size_t oy = y0; oy < y1; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          const T* src = row + (oy - y0) * out.w;
          T* dst = plane + static_cast<std::size_t>(iy) * width;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride + shift] += src[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const Shape os = g.output();
  const std::size_t k = g.weight.c * g.weight.h * g.weight.w;
  const std::size_t pixels = os.h * os.w;
  const std::size_t in_image = g.input.c * g.input.h * g.input.w;
  const Bands bands = make_bands(g, os);
  const auto items = static_cast<std::ptrdiff_t>(os.n * bands.count);
  const bool pointwise = is_pointwise(g);
  const ConstMatMap<T> wm(weight.data(), static_cast<Eigen::Index>(os.c),
                          static_cast<Eigen::Index>(k), Eigen::OuterStride<>(k));

#pragma omp parallel
  {
    std::vector<T> col;
#pragma omp for schedule(static)
    for (std::ptrdiff_t item = 0; item < items; ++item) {
      const std::size_t n = static_cast<std::size_t>(item) / bands.count;
      const std::size_t y0 = (static_cast<std::size_t>(item) % bands.count) * bands.rows;
      const std::size_t y1 = std::min(os.h, y0 + bands.rows);
      const auto band = static_cast<Eigen::Index>((y1 - y0) * os.w);
      const T* xn = x.data() + n * in_image;
      MatMap<T> o(out.data() + n * os.c * pixels + y0 * os.w, static_cast<Eigen::Index>(os.c),
                  band, Eigen::OuterStride<>(pixels));
      if (pointwise) {
        const ConstMatMap<T> xm(xn + y0 * os.w, static_cast<Eigen::Index>(k), band,
                                Eigen::OuterStride<>(pixels));
        o.noalias() = wm * xm;
      } else {
        col.resize(k * static_cast<std::size_t>(band));
        im2col(g, os, xn, y0, y1, col.data());
        const ConstMatMap<T> cm(col.data(), static_cast<Eigen::Index>(k), band,
                                Eigen::OuterStride<>(band));
        o.noalias() = wm * cm;
      }
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        o.row(static_cast<Eigen::Index>(oc)).array() += bias[oc];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias) {
  const Shape os = g.output();
  const std::size_t k = g.weight.c * g.weight.h * g.weight.w;
  const std::size_t pixels = os.h * os.w;
  const std::size_t in_image = g.input.c * g.input.h * g.input.w;
  const Bands bands = make_bands(g, os);
  const bool pointwise = is_pointwise(g);
  const bool want_dx = !dx.empty();
  const std::size_t wsize = os.c * k;
  std::vector<T> dw_part(os.n * wsize);
  std::vector<T> db_part(os.n * os.c);
  const ConstMatMap<T> wm(weight.data(), static_cast<Eigen::Index>(os.c),
                          static_cast<Eigen::Index>(k), Eigen::OuterStride<>(k));

#pragma omp parallel
  {
    std::vector<T> col, dcol;
#pragma omp for schedule(static)
    for (std::ptrdiff_t ni = 0; ni < static_cast<std::ptrdiff_t>(os.n); ++ni) {
      const auto n = static_cast<std::size_t>(ni);
      const T* xn = x.data() + n * in_image;
      const T* don = dout.data() + n * os.c * pixels;
      MatMap<T> dwn(dw_part.data() + n * wsize, static_cast<Eigen::Index>(os.c),
                    static_cast<Eigen::Index>(k), Eigen::OuterStride<>(k));
      dwn.setZero();
      for (std::size_t b = 0; b < bands.count; ++b) {
        const std::size_t y0 = b * bands.rows;
        const std::size_t y1 = std::min(os.h, y0 + bands.rows);
        const auto band = static_cast<Eigen::Index>((y1 - y0) * os.w);
        const ConstMatMap<T> dom(don + y0 * os.w, static_cast<Eigen::Index>(os.c), band,
                                 Eigen::OuterStride<>(pixels));
        if (pointwise) {
          const ConstMatMap<T> xm(xn + y0 * os.w, static_cast<Eigen::Index>(k), band,
                                  Eigen::OuterStride<>(pixels));
          dwn.noalias() += dom * xm.transpose();
          if (want_dx) {
            MatMap<T> dxm(dx.data() + n * in_image + y0 * os.w, static_cast<Eigen::Index>(k), band,
                          Eigen::OuterStride<>(pixels));
            dxm.noalias() += wm.transpose() * dom;
          }
        } else {
          col.resize(k * static_cast<std::size_t>(band));
          im2col(g, os, xn, y0, y1, col.data());
          const ConstMatMap<T> cm(col.data(), static_cast<Eigen::Index>(k), band,
                                  Eigen::OuterStride<>(band));
          dwn.noalias() += dom * cm.transpose();
          if (want_dx) {
            dcol.resize(k * static_cast<std::size_t>(band));
            MatMap<T> dcm(dcol.data(), static_cast<Eigen::Index>(k), band,
                          Eigen::OuterStride<>(band));
            dcm.noalias() = wm.transpose() * dom;
            col2im(g, os, dcol.data(), y0, y1, dx.data() + n * in_image);
          }
        }
      }
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        const T* row = don + oc * pixels;
        T acc = 0;
        for (std::size_t p = 0; p < pixels; ++p) acc += row[p];
        db_part[n * os.c + oc] = acc;
      }
    }

    // Batch reduction in fixed item order.
#pragma omp for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(wsize); ++e) {
      T acc = 0;
      for (std::size_t n = 0; n < os.n; ++n) acc += dw_part[n * wsize + static_cast<std::size_t>(e)];
      dweight[static_cast<std::size_t>(e)] += acc;
    }
  }
  for (std::size_t oc = 0; oc < os.c; ++oc) {
    T acc = 0;
    for (std::size_t n = 0; n < os.n; ++n) acc += db_part[n * os.c + oc];
    dbias[oc] += acc;
  }
}

template <typename T>
void relu_forward(std::span<const T> x, std::span<T> out) {
  const auto size = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < size; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::span<const T> x, std::span<const T> dout, std::span<T> dx) {
  const auto size = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < size; ++i) dx[i] += x[i] > T(0) ? dout[i] : T(0);
}

template <typename T>
void add_forward(std::span<const T> a, std::span<const T> b, std::span<T> out) {
  const auto size = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < size; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void accumulate(std::span<const T> src, std::span<T> dst) {
  const auto size = static_cast<std::ptrdiff_t>(src.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < size; ++i) dst[i] += src[i];
}

template <typename T>
void maxpool2x2_forward(const Shape& in, std::span<const T> x, std::span<T> out,
                        std::span<std::uint32_t> argmax) {
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  const auto planes = static_cast<std::ptrdiff_t>(in.n * in.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const T* src = x.data() + static_cast<std::size_t>(p) * in.h * in.w;
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    std::uint32_t* idx = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * in.w + 2 * ox;
        const std::size_t candidates[3] = {best + 1, best + in.w, best + in.w + 1};
        for (std::size_t c : candidates) {
          if (src[c] > src[best]) best = c;
        }
        dst[oy * ow + ox] = src[best];
        idx[oy * ow + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(const Shape& in, std::span<const std::uint32_t> argmax,
                         std::span<const T> dout, std::span<T> dx) {
  const std::size_t pooled = (in.h / 2) * (in.w / 2);
  const auto planes = static_cast<std::ptrdiff_t>(in.n * in.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const auto base = static_cast<std::size_t>(p);
    T* dst = dx.data() + base * in.h * in.w;
    for (std::size_t i = 0; i < pooled; ++i) {
      dst[argmax[base * pooled + i]] += dout[base * pooled + i];
    }
  }
}

template <typename T>
void upsample_nearest2x_forward(const Shape& in, std::span<const T> x, std::span<T> out) {
  const std::size_t ow = 2 * in.w;
  const auto planes = static_cast<std::ptrdiff_t>(in.n * in.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const T* src = x.data() + static_cast<std::size_t>(p) * in.h * in.w;
    T* dst = out.data() + static_cast<std::size_t>(p) * 4 * in.h * in.w;
    for (std::size_t y = 0; y < in.h; ++y) {
      T* r0 = dst + (2 * y) * ow;
      for (std::size_t xx = 0; xx < in.w; ++xx) {
        r0[2 * xx] = r0[2 * xx + 1] = src[y * in.w + xx];
      }
      std::memcpy(r0 + ow, r0, ow * sizeof(T));
    }
  }
}

template <typename T>
void upsample_nearest2x_backward(const Shape& in, std::span<const T> dout, std::span<T> dx) {
  const std::size_t ow = 2 * in.w;
  const auto planes = static_cast<std::ptrdiff_t>(in.n * in.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const T* src = dout.data() + static_cast<std::size_t>(p) * 4 * in.h * in.w;
    T* dst = dx.data() + static_cast<std::size_t>(p) * in.h * in.w;
    for (std::size_t y = 0; y < in.h; ++y) {
      const T* r0 = src + (2 * y) * ow;
      const T* r1 = r0 + ow;
      for (std::size_t xx = 0; xx < in.w; ++xx) {
        dst[y * in.w + xx] += (r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]);
      }
    }
  }
}

template <typename T>
void softmax_channels_forward(const Shape& s, std::span<const T> logits, std::span<T> out) {
  const std::size_t plane = s.h * s.w;
  const auto pixels = static_cast<std::ptrdiff_t>(s.n * plane);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < pixels; ++q) {
    const std::size_t n = static_cast<std::size_t>(q) / plane;
    const std::size_t p = static_cast<std::size_t>(q) % plane;
    const std::size_t base = n * s.c * plane + p;
    T top = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < s.c; ++c) top = std::max(top, logits[base + c * plane]);
    T total = 0;
    for (std::size_t c = 0; c < s.c; ++c) {
      const T e = std::exp(logits[base + c * plane] - top);
      out[base + c * plane] = e;
      total += e;
    }
    for (std::size_t c = 0; c < s.c; ++c) out[base + c * plane] /= total;
  }
}

#define DEEPUNET_INSTANTIATE_KERNELS(T)                                                          \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                            \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                   std::span<const T>, std::span<T>, std::span<T>,              \
                                   std::span<T>);                                               \
  template void relu_forward<T>(std::span<const T>, std::span<T>);                              \
  template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);         \
  template void add_forward<T>(std::span<const T>, std::span<const T>, std::span<T>);           \
  template void accumulate<T>(std::span<const T>, std::span<T>);                                \
  template void maxpool2x2_forward<T>(const Shape&, std::span<const T>, std::span<T>,           \
                                      std::span<std::uint32_t>);                                \
  template void maxpool2x2_backward<T>(const Shape&, std::span<const std::uint32_t>,            \
                                       std::span<const T>, std::span<T>);                       \
  template void upsample_nearest2x_forward<T>(const Shape&, std::span<const T>, std::span<T>);  \
  template void upsample_nearest2x_backward<T>(const Shape&, std::span<const T>, std::span<T>); \
  template void softmax_channels_forward<T>(const Shape&, std::span<const T>, std::span<T>);

DEEPUNET_INSTANTIATE_KERNELS(float)
DEEPUNET_INSTANTIATE_KERNELS(double)

}  // namespace deepunet::kernels
