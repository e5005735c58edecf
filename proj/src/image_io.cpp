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

#include <png.h>

#include <cstring>
#include <stdexcept>
#include <string>

#include "deepunet/image.hpp"

namespace deepunet {

namespace {

// RAII over libpng's simplified API.
class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &image_; }

 private:
  png_image image_;
};

template <std::size_t Channels>
Raster<Channels> read_png(const std::filesystem::path& path, png_uint_32 format) {
  PngImage png;
  if (png_image_begin_read_from_file(png.get(), path.c_str()) == 0) {
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + png.get()->message);
  }
  png.get()->format = format;
  Raster<Channels> out(png.get()->height, png.get()->width);
  if (png_image_finish_read(png.get(), nullptr, out.pixels.data(), 0, nullptr) == 0) {
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + png.get()->message);
  }
  return out;
}

template <std::size_t Channels>
void write(const std::filesystem::path& path, const Raster<Channels>& image, png_uint_32 format) {
  PngImage png;
  png.get()->width = static_cast<png_uint_32>(image.width);
  png.get()->height = static_cast<png_uint_32>(image.height);
  png.get()->format = format;
  if (png_image_write_to_file(png.get(), path.c_str(), 0, image.pixels.data(), 0, nullptr) == 0) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + png.get()->message);
  }
}

}  // namespace

void LabeledImage::validate() const {
  if (rgb.height != mask.height || rgb.width != mask.width) {
    throw std::invalid_argument("image is " + std::to_string(rgb.height) + "x" +
                                std::to_string(rgb.width) + " but mask is " +
                                std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
  for (std::uint8_t v : mask.pixels) {
    if (v != kSea && v != kLand) {
      throw std::invalid_argument("mask value " + std::to_string(v) + " is neither 0 nor 255");
    }
  }
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  return read_png<3>(path, PNG_FORMAT_RGB);
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  return read_png<1>(path, PNG_FORMAT_GRAY);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write(path, image, PNG_FORMAT_RGB);
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write(path, image, PNG_FORMAT_GRAY);
}

GrayImage binarize_mask(const GrayImage& mask) {
  GrayImage out = mask;
  for (auto& v : out.pixels) v = v >= 128 ? kSea : kLand;
  return out;
}

Tensor to_tensor(const RgbImage& image) {
  Tensor t(Shape{1, 3, image.height, image.width});
  auto d = t.data();
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) d[c * plane + i] = image.pixels[i * 3 + c] / 255.0f;
  }
  return t;
}

double sea_fraction(const GrayImage& mask) {
  if (mask.pixels.empty()) return 0.0;
  std::size_t sea = 0;
  for (auto v : mask.pixels) sea += v == kSea;
  return static_cast<double>(sea) / static_cast<double>(mask.pixels.size());
}

}  // namespace deepunet
