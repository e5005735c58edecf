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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepunet/tensor.hpp"

namespace deepunet {

inline constexpr std::uint8_t kSea = 255;
inline constexpr std::uint8_t kLand = 0;
inline constexpr std::uint8_t kSeaClass = 1;
inline constexpr std::uint8_t kLandClass = 0;

/// 8-bit raster with interleaved channels.
template <std::size_t Channels>
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w * Channels, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * Channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * Channels + c];
  }
  friend bool operator==(const Raster&, const Raster&) = default;
};

using RgbImage = Raster<3>;
using GrayImage = Raster<1>;

/// RGB raster plus binary mask (255 sea, 0 land) of the same extent.
struct LabeledImage {
  RgbImage rgb;
  GrayImage mask;

  /// Throws if extents differ or the mask holds values other than 0 / 255.
  void validate() const;
  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

RgbImage read_png_rgb(const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);

/// Pixels >= 128 become 255, the rest 0.
GrayImage binarize_mask(const GrayImage& mask);

/// (1, 3, H, W) tensor scaled to [0, 1].
Tensor to_tensor(const RgbImage& image);

/// Fraction of mask pixels equal to 255.
double sea_fraction(const GrayImage& mask);

}  // namespace deepunet
