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

// Overlap-tile prediction for images of any size.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "deepunet/image.hpp"
#include "deepunet/model.hpp"

namespace deepunet {

struct TileOrigin {
  std::size_t y = 0;  // in padded coordinates
  std::size_t x = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

struct TilePlan {
  std::size_t height = 0, width = 0;  // original image
  std::size_t tile = 0, stride = 0;
  std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  std::vector<TileOrigin> origins;  // bottom row first, left to right within a row

  std::size_t padded_height() const { return height + pad_top + pad_bottom; }
  std::size_t padded_width() const { return width + pad_left + pad_right; }
};

/// Per axis: n = ceil((L - T) / S) + 1 tiles (1 if L <= T); the padded
/// extent (n - 1) * S + T is split evenly between the two edges.
TilePlan plan_tiles(std::size_t height, std::size_t width, std::size_t tile, std::size_t stride);

/// Reflection without repeating the edge pixel: [a b c] padded by 2 on the
/// left gives [c b a b c]. Each pad must be smaller than the extent.
template <std::size_t C>
Raster<C> mirror_pad(const Raster<C>& img, std::size_t top, std::size_t bottom, std::size_t left,
                     std::size_t right);

RgbImage mirror_pad(const RgbImage& img, const TilePlan& plan);

/// exp(-|p - c|^2 / (2 sigma^2)) with c = ((T-1)/2, (T-1)/2); row-major T*T.
std::vector<double> gaussian_weights(std::size_t tile, double sigma);

/// Accumulates weighted two-class tile probabilities in double precision and
/// normalizes on finish(). Tiles may be added in any order.
class Stitcher {
 public:
  Stitcher(const TilePlan& plan, std::vector<double> weights);

  /// `probs` is one (2, T, T) tile output for plan.origins[index].
  void add(std::size_t index, std::span<const float> probs);
  /// (1, 2, H, W) blended probabilities with the padding cropped away.
  Tensor finish() const;

 private:
  TilePlan plan_;
  std::vector<double> weights_;
  std::vector<double> acc_;   // 2 * padded plane
  std::vector<double> wsum_;  // padded plane
};

struct TilingOptions {
  std::size_t tile = 640;
  std::size_t stride = 0;   // 0 = tile / 2
  double sigma = 0;         // 0 = tile / 6
  std::size_t batch = 4;    // tiles per forward pass

  std::size_t resolved_stride() const { return stride == 0 ? std::max<std::size_t>(1, tile / 2) : stride; }
  double resolved_sigma() const { return sigma > 0 ? sigma : static_cast<double>(tile) / 6.0; }
};

/// (1, 2, H, W) probabilities for the whole image.
Tensor predict_image(const Model& model, const RgbImage& image, const TilingOptions& options);

/// Per-pixel argmax, 255 for sea and 0 for land; an exact tie goes to land.
GrayImage binarize(const Tensor& probs);

}  // namespace deepunet
