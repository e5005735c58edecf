// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the kernels under test.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "deepunet/model.hpp"
#include "deepunet/tensor.hpp"

namespace deepunet::oracle {

/// Direct six-loop cross-correlation with zero padding, summed in double.
inline std::vector<double> naive_conv2d(const Shape& in, const std::vector<double>& x,
                                        const Shape& wshape, const std::vector<double>& w,
                                        const std::vector<double>& b, std::size_t stride,
                                        std::size_t pad, Shape* out_shape = nullptr) {
  const std::size_t oh = (in.h + 2 * pad - wshape.h) / stride + 1;
  const std::size_t ow = (in.w + 2 * pad - wshape.w) / stride + 1;
  std::vector<double> out(in.n * wshape.n * oh * ow, 0.0);
  for (std::size_t n = 0; n < in.n; ++n)
    for (std::size_t o = 0; o < wshape.n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = b.empty() ? 0.0 : b[o];
          for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t ky = 0; ky < wshape.h; ++ky)
              for (std::size_t kx = 0; kx < wshape.w; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(xo * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) ||
                    ix >= static_cast<long>(in.w))
                  continue;
                acc += x[((n * in.c + c) * in.h + iy) * in.w + ix] *
                       w[((o * in.c + c) * wshape.h + ky) * wshape.w + kx];
              }
          out[((n * wshape.n + o) * oh + y) * ow + xo] = acc;
        }
  if (out_shape != nullptr) *out_shape = Shape{in.n, wshape.n, oh, ow};
  return out;
}

/// Horizontal extent of the logits touched by a single-pixel impulse,
/// averaged over the 2^depth pooling phases of the impulse column.
///
/// All weights are one and biases zero, so every activation downstream of
/// the impulse is strictly positive and everything else stays zero.
inline double impulse_receptive_field(int depth) {
  ModelConfig cfg;
  cfg.depth = depth;
  cfg.wide_channels = 1;
  cfg.narrow_channels = 1;
  Model64 m = build(cfg, 0).cast<double>();
  for (auto& p : m.parameters()) {
    Tensor64 t = p.tensor;
    const bool bias = p.name.ends_with(".bias");
    for (double& v : t.data()) v = bias ? 0.0 : 1.0;
  }
  const std::size_t period = std::size_t{1} << depth;
  const std::size_t width = 2 * 512;
  const std::size_t height = period;
  double total = 0;
  for (std::size_t phase = 0; phase < period; ++phase) {
    Tensor64 img(Shape{1, 3, height, width});
    const std::size_t cx = width / 2 + phase;
    img.at(0, 0, height / 2, cx) = 1.0;
    const Tensor64 logits = forward_logits(m, img);
    std::size_t lo = width, hi = 0;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        if (logits.at(0, 0, y, x) > 0) {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
    total += static_cast<double>(hi - lo + 1);
  }
  return total / static_cast<double>(period);
}

/// Parameter count summed layer by layer from the block wiring.
inline std::size_t hand_parameter_count(int depth, std::size_t wide, std::size_t narrow,
                                        std::size_t in = 3, std::size_t classes = 2) {
  struct L {
    std::size_t k, i, o;
  };
  std::vector<L> layers = {{3, in, wide}, {3, wide, wide}, {3, wide, narrow}};
  for (int s = 1; s < depth; ++s) {
    layers.push_back({3, narrow, wide});
    layers.push_back({3, wide, narrow});
  }
  for (int s = 0; s < depth; ++s) {
    layers.push_back({3, 2 * narrow, wide});
    layers.push_back({3, wide, narrow});
  }
  layers.push_back({1, narrow, classes});
  std::size_t total = 0;
  for (const L& l : layers) total += l.k * l.k * l.i * l.o + l.o;
  return total;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace deepunet::oracle
