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
#include <fstream>
#include <set>
#include <stdexcept>

#include "deepunet/data.hpp"

namespace deepunet {

LabeledImage load_labeled(const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path) {
  LabeledImage img{read_png_rgb(image_path), binarize_mask(read_png_gray(mask_path))};
  if (img.rgb.height != img.mask.height || img.rgb.width != img.mask.width) {
    throw std::runtime_error("image " + image_path.string() + " is " +
                             std::to_string(img.rgb.height) + "x" + std::to_string(img.rgb.width) +
                             " but mask " + mask_path.string() + " is " +
                             std::to_string(img.mask.height) + "x" +
                             std::to_string(img.mask.width));
  }
  return img;
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      if (body.rfind("split: ", 0) == 0) {
        m.split = body.substr(7);
      } else {
        m.comments.push_back(body);
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected image<TAB>mask");
    }
    m.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return m;
}

void DatasetManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# split: " << split << "\n";
  for (const auto& c : comments) out << "# " << c << "\n";
  for (const auto& e : entries) out << e.image.string() << "\t" << e.mask.string() << "\n";
  if (!out) throw std::runtime_error("error writing manifest " + path.string());
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

void DatasetManifest::validate() const {
  if (entries.empty()) throw std::invalid_argument("manifest has no entries");
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : entries) {
    if (!seen.insert({e.image.string(), e.mask.string()}).second) {
      throw std::invalid_argument("duplicate manifest pair " + e.image.string() + " / " +
                                  e.mask.string());
    }
    for (const auto& p : {resolve(e.image), resolve(e.mask)}) {
      if (!std::filesystem::exists(p)) {
        throw std::runtime_error("manifest references missing file " + p.string());
      }
    }
  }
}

std::vector<LabeledImage> load_manifest_images(const DatasetManifest& manifest) {
  manifest.validate();
  std::vector<LabeledImage> images;
  images.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    images.push_back(load_labeled(manifest.resolve(e.image), manifest.resolve(e.mask)));
  }
  return images;
}

TileSample make_tile(const LabeledImage& img, std::size_t y, std::size_t x, std::size_t tile,
                     std::size_t source_id) {
  TileSample s;
  s.tile = Tensor(Shape{1, 3, tile, tile});
  s.target.resize(tile * tile);
  s.source_id = source_id;
  s.origin_y = y;
  s.origin_x = x;
  auto d = s.tile.data();
  const std::size_t plane = tile * tile;
  for (std::size_t r = 0; r < tile; ++r) {
    for (std::size_t c = 0; c < tile; ++c) {
      const std::size_t i = r * tile + c;
      for (std::size_t ch = 0; ch < 3; ++ch) d[ch * plane + i] = img.rgb.at(y + r, x + c, ch) / 255.0f;
      s.target[i] = img.mask.at(y + r, x + c) == kSea ? kSeaClass : kLandClass;
    }
  }
  return s;
}

bool has_both_classes(const GrayImage& mask, std::size_t y, std::size_t x, std::size_t tile,
                      double min_fraction) {
  std::size_t sea = 0;
  for (std::size_t r = 0; r < tile; ++r) {
    for (std::size_t c = 0; c < tile; ++c) sea += mask.at(y + r, x + c) == kSea;
  }
  const double total = static_cast<double>(tile * tile);
  const double sea_frac = sea / total;
  return sea_frac >= min_fraction && 1.0 - sea_frac >= min_fraction;
}

std::optional<TileSample> crop_both_classes(const LabeledImage& img, std::size_t tile,
                                            double min_fraction, Rng& rng, int max_tries,
                                            std::size_t source_id) {
  const std::size_t h = img.rgb.height, w = img.rgb.width;
  if (tile == 0 || h < tile || w < tile) {
    throw std::invalid_argument("image " + std::to_string(h) + "x" + std::to_string(w) +
                                " is smaller than tile " + std::to_string(tile));
  }
  std::uniform_int_distribution<std::size_t> oy(0, h - tile), ox(0, w - tile);
  for (int i = 0; i < max_tries; ++i) {
    const std::size_t y = oy(rng);
    const std::size_t x = ox(rng);
    if (has_both_classes(img.mask, y, x, tile, min_fraction)) {
      return make_tile(img, y, x, tile, source_id);
    }
  }
  return std::nullopt;
}

std::vector<TileSample> build_training_set(const std::vector<LabeledImage>& images,
                                           std::size_t tile, std::size_t samples_per_image,
                                           const AugmentSpec& spec, std::uint64_t seed,
                                           double min_fraction, TrainingSetStats* stats) {
  if (images.empty()) throw std::invalid_argument("build_training_set: no images");
  std::vector<std::vector<TileSample>> per_image(images.size());
  const auto count = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Rng rng = derive_rng(seed, idx);
    const LabeledImage aug = augment(images[idx], spec, rng, tile);
    for (std::size_t s = 0; s < samples_per_image; ++s) {
      if (auto sample = crop_both_classes(aug, tile, min_fraction, rng, 100, idx)) {
        per_image[idx].push_back(std::move(*sample));
      }
    }
  }
  std::vector<TileSample> out;
  for (auto& v : per_image) {
    for (auto& s : v) out.push_back(std::move(s));
  }
  Rng order = derive_rng(seed, images.size(), 0x5eedULL);
  std::shuffle(out.begin(), out.end(), order);
  if (stats != nullptr) {
    stats->emitted = out.size();
    stats->skipped = images.size() * samples_per_image - out.size();
  }
  return out;
}

}  // namespace deepunet
