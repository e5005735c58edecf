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

#include "deepunet/tiling.hpp"

#include <cmath>
#include <stdexcept>

namespace deepunet {

namespace {

struct AxisPlan {
  std::size_t count, before, after;
};

AxisPlan plan_axis(std::size_t length, std::size_t tile, std::size_t stride) {
  const std::size_t n = length <= tile ? 1 : (length - tile + stride - 1) / stride + 1;
  const std::size_t padded = (n - 1) * stride + tile;
  const std::size_t extra = padded - length;
  return {n, extra / 2, extra - extra / 2};
}

// Reflect index i in [-pad, n + pad) onto [0, n) without repeating the edge.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (i < 0) i = -i;
  if (i >= len) i = 2 * (len - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

TilePlan plan_tiles(std::size_t height, std::size_t width, std::size_t tile, std::size_t stride) {
  if (height == 0 || width == 0) throw std::invalid_argument("plan_tiles: empty image");
  if (stride < 1 || tile < stride) {
    throw std::invalid_argument("plan_tiles: need tile >= stride >= 1, got tile " +
                                std::to_string(tile) + " stride " + std::to_string(stride));
  }
  const AxisPlan ay = plan_axis(height, tile, stride);
  const AxisPlan ax = plan_axis(width, tile, stride);
  TilePlan p;
  p.height = height;
  p.width = width;
  p.tile = tile;
  p.stride = stride;
  p.pad_top = ay.before;
  p.pad_bottom = ay.after;
  p.pad_left = ax.before;
  p.pad_right = ax.after;
  p.origins.reserve(ay.count * ax.count);
  for (std::size_t r = ay.count; r-- > 0;) {
    for (std::size_t c = 0; c < ax.count; ++c) p.origins.push_back({r * stride, c * stride});
  }
  return p;
}

template <std::size_t C>
Raster<C> mirror_pad(const Raster<C>& img, std::size_t top, std::size_t bottom, std::size_t left,
                     std::size_t right) {
  const std::size_t h = img.height, w = img.width;
  if (std::max(top, bottom) >= h || std::max(left, right) >= w) {
    if (top + bottom + left + right > 0) {
      throw std::invalid_argument("mirror_pad: image " + std::to_string(h) + "x" +
                                  std::to_string(w) + " is too small to reflect padding " +
                                  std::to_string(std::max(top, bottom)) + "/" +
                                  std::to_string(std::max(left, right)));
    }
  }
  Raster<C> out(h + top + bottom, w + left + right);
  for (std::size_t y = 0; y < out.height; ++y) {
    const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(top), h);
    for (std::size_t x = 0; x < out.width; ++x) {
      const std::size_t sx =
          reflect(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(left), w);
      for (std::size_t c = 0; c < C; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

template RgbImage mirror_pad(const RgbImage&, std::size_t, std::size_t, std::size_t, std::size_t);
template GrayImage mirror_pad(const GrayImage&, std::size_t, std::size_t, std::size_t, std::size_t);

RgbImage mirror_pad(const RgbImage& img, const TilePlan& plan) {
  return mirror_pad(img, plan.pad_top, plan.pad_bottom, plan.pad_left, plan.pad_right);
}

std::vector<double> gaussian_weights(std::size_t tile, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_weights: sigma must be > 0");
  std::vector<double> w(tile * tile);
  const double c = (static_cast<double>(tile) - 1.0) / 2.0;
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t y = 0; y < tile; ++y) {
    for (std::size_t x = 0; x < tile; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      w[y * tile + x] = std::exp(-(dy * dy + dx * dx) / denom);
    }
  }
  return w;
}

Stitcher::Stitcher(const TilePlan& plan, std::vector<double> weights)
    : plan_(plan), weights_(std::move(weights)) {
  if (weights_.size() != plan_.tile * plan_.tile) {
    throw std::invalid_argument("Stitcher: weight map has " + std::to_string(weights_.size()) +
                                " entries for tile " + std::to_string(plan_.tile));
  }
  const std::size_t plane = plan_.padded_height() * plan_.padded_width();
  acc_.assign(2 * plane, 0.0);
  wsum_.assign(plane, 0.0);
}

void Stitcher::add(std::size_t index, std::span<const float> probs) {
  const std::size_t t = plan_.tile;
  if (index >= plan_.origins.size()) throw std::out_of_range("Stitcher: tile index out of range");
  if (probs.size() != 2 * t * t) {
    throw std::invalid_argument("Stitcher: expected " + std::to_string(2 * t * t) +
                                " probabilities, got " + std::to_string(probs.size()));
  }
  const TileOrigin o = plan_.origins[index];
  const std::size_t pw = plan_.padded_width(), plane = plan_.padded_height() * pw;
  for (std::size_t y = 0; y < t; ++y) {
    for (std::size_t x = 0; x < t; ++x) {
      const std::size_t i = y * t + x;
      const std::size_t dst = (o.y + y) * pw + (o.x + x);
      const double w = weights_[i];
      acc_[dst] += w * probs[i];
      acc_[plane + dst] += w * probs[t * t + i];
      wsum_[dst] += w;
    }
  }
}

Tensor Stitcher::finish() const {
  const std::size_t h = plan_.height, w = plan_.width;
  const std::size_t pw = plan_.padded_width(), plane = plan_.padded_height() * pw;
  Tensor out(Shape{1, 2, h, w});
  auto d = out.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t src = (y + plan_.pad_top) * pw + (x + plan_.pad_left);
      if (!(wsum_[src] > 0)) {
        throw std::logic_error("Stitcher: pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                               ") received no tile");
      }
      d[y * w + x] = static_cast<float>(acc_[src] / wsum_[src]);
      d[h * w + y * w + x] = static_cast<float>(acc_[plane + src] / wsum_[src]);
    }
  }
  return out;
}

Tensor predict_image(const Model& model, const RgbImage& image, const TilingOptions& options) {
  const std::size_t t = options.tile;
  if (t == 0 || t % model.config.input_multiple() != 0) {
    throw std::invalid_argument("tile " + std::to_string(t) + " is not a multiple of " +
                                std::to_string(model.config.input_multiple()) +
                                " required by depth " + std::to_string(model.config.depth));
  }
  const TilePlan plan = plan_tiles(image.height, image.width, t, options.resolved_stride());
  const RgbImage padded = mirror_pad(image, plan);
  Stitcher stitcher(plan, gaussian_weights(t, options.resolved_sigma()));

  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  const std::size_t plane = t * t;
  for (std::size_t start = 0; start < plan.origins.size(); start += batch) {
    const std::size_t n = std::min(batch, plan.origins.size() - start);
    Tensor x(Shape{n, 3, t, t});
    auto d = x.data();
    for (std::size_t b = 0; b < n; ++b) {
      const TileOrigin o = plan.origins[start + b];
      for (std::size_t y = 0; y < t; ++y) {
        for (std::size_t xx = 0; xx < t; ++xx) {
          for (std::size_t c = 0; c < 3; ++c) {
            d[((b * 3 + c) * t + y) * t + xx] = padded.at(o.y + y, o.x + xx, c) / 255.0f;
          }
        }
      }
    }
    const Tensor probs = forward(model, x);
    for (std::size_t b = 0; b < n; ++b) {
      stitcher.add(start + b, probs.data().subspan(b * 2 * plane, 2 * plane));
    }
  }
  return stitcher.finish();
}

GrayImage binarize(const Tensor& probs) {
  const Shape s = probs.shape();
  if (s.n != 1 || s.c != 2) {
    throw std::invalid_argument("binarize: expected (1, 2, H, W), got " + s.str());
  }
  GrayImage out(s.h, s.w);
  const auto d = probs.data();
  const std::size_t plane = s.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    out.pixels[i] = d[plane + i] > d[i] ? kSea : kLand;
  }
  return out;
}

}  // namespace deepunet
