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

#include <algorithm>
#include <cmath>

#include "deepunet/data.hpp"

namespace deepunet {

Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

namespace {

// Applies the same pixel mapping to every raster: out(y, x) = in(src(y, x)).
template <std::size_t C, typename Map>
Raster<C> remap(const Raster<C>& in, std::size_t h, std::size_t w, Map src) {
  Raster<C> out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto [sy, sx] = src(y, x);
      for (std::size_t c = 0; c < C; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

template <typename Map>
LabeledImage remap_both(const LabeledImage& img, std::size_t h, std::size_t w, Map src) {
  return {remap(img.rgb, h, w, src), remap(img.mask, h, w, src)};
}

}  // namespace

LabeledImage flip_horizontal(const LabeledImage& img) {
  const std::size_t w = img.rgb.width;
  return remap_both(img, img.rgb.height, w,
                    [w](std::size_t y, std::size_t x) { return std::pair{y, w - 1 - x}; });
}

LabeledImage flip_vertical(const LabeledImage& img) {
  const std::size_t h = img.rgb.height;
  return remap_both(img, h, img.rgb.width,
                    [h](std::size_t y, std::size_t x) { return std::pair{h - 1 - y, x}; });
}

LabeledImage rotate90(const LabeledImage& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  const std::size_t h = img.rgb.height, w = img.rgb.width;
  switch (k) {
    case 1:
      return remap_both(img, w, h, [w](std::size_t y, std::size_t x) {
        return std::pair{x, w - 1 - y};
      });
    case 2:
      return remap_both(img, h, w, [h, w](std::size_t y, std::size_t x) {
        return std::pair{h - 1 - y, w - 1 - x};
      });
    case 3:
      return remap_both(img, w, h, [h](std::size_t y, std::size_t x) {
        return std::pair{h - 1 - x, y};
      });
    default:
      return img;
  }
}

LabeledImage rescale(const LabeledImage& img, double factor) {
  const std::size_t h = img.rgb.height, w = img.rgb.width;
  const auto nh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(h * factor)));
  const auto nw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w * factor)));
  const double sy = static_cast<double>(h) / nh, sx = static_cast<double>(w) / nw;

  LabeledImage out{RgbImage(nh, nw), GrayImage(nh, nw)};
  for (std::size_t y = 0; y < nh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ay = fy - y0;
    const std::size_t my = std::min(static_cast<std::size_t>((y + 0.5) * sy), h - 1);
    for (std::size_t x = 0; x < nw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double ax = fx - x0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.rgb.at(y0, x0, c) * (1 - ax) + img.rgb.at(y0, x1, c) * ax;
        const double bottom = img.rgb.at(y1, x0, c) * (1 - ax) + img.rgb.at(y1, x1, c) * ax;
        out.rgb.at(y, x, c) =
            static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - ay) + bottom * ay), 0L, 255L));
      }
      const std::size_t mx = std::min(static_cast<std::size_t>((x + 0.5) * sx), w - 1);
      out.mask.at(y, x) = img.mask.at(my, mx);
    }
  }
  return out;
}

LabeledImage augment(const LabeledImage& img, const AugmentSpec& spec, Rng& rng,
                     std::size_t min_extent) {
  std::uniform_int_distribution<int> coin(0, 1), turns(0, 3);
  std::uniform_real_distribution<double> scale_dist(spec.min_scale, spec.max_scale);
  // Draw every random decision up front so the stream consumption is fixed.
  const bool fh = coin(rng) == 1;
  const bool fv = coin(rng) == 1;
  const int k = turns(rng);
  double scale = scale_dist(rng);

  LabeledImage out = img;
  if (spec.flips && fh) out = flip_horizontal(out);
  if (spec.flips && fv) out = flip_vertical(out);
  if (spec.rotations && k != 0) out = rotate90(out, k);

  const std::size_t shortest = std::min(out.rgb.height, out.rgb.width);
  if (min_extent > 0 && shortest > 0) {
    scale = std::max(scale, (static_cast<double>(min_extent) + 0.5) / static_cast<double>(shortest));
  }
  if (std::abs(scale - 1.0) > 1e-9) out = rescale(out, scale);
  return out;
}

}  // namespace deepunet
