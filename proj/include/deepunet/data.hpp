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
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "deepunet/image.hpp"
#include "deepunet/tensor.hpp"

namespace deepunet {

using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b); identical for any worker count.
Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// ---------------------------------------------------------------- IO

LabeledImage load_labeled(const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path);

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path mask;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// `image<TAB>mask` per line; `#` lines are comments. `split` is read from
/// and written to a `# split: <tag>` header line.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string split = "train";
  std::vector<std::string> comments;  // extra header lines, without '#'
  std::filesystem::path base_dir;     // directory relative entries are resolved against

  static DatasetManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// Throws on an empty list, duplicate pairs or missing files.
  void validate() const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.entries == b.entries && a.split == b.split && a.comments == b.comments;
  }
};

// ---------------------------------------------------------------- augmentation

struct AugmentSpec {
  bool flips = true;
  bool rotations = true;  // multiples of 90 degrees
  double min_scale = 0.5;
  double max_scale = 2.0;
  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

LabeledImage flip_horizontal(const LabeledImage& img);
LabeledImage flip_vertical(const LabeledImage& img);
/// Counter-clockwise by quarter_turns * 90 degrees.
LabeledImage rotate90(const LabeledImage& img, int quarter_turns);
/// Bilinear for RGB, nearest for the mask.
LabeledImage rescale(const LabeledImage& img, double factor);

/// Random flips, quarter turns and a scale in [min_scale, max_scale]; the
/// same geometry is applied to image and mask. `min_extent` raises the scale
/// when needed so the result stays at least that large.
LabeledImage augment(const LabeledImage& img, const AugmentSpec& spec, Rng& rng,
                     std::size_t min_extent = 0);

// ---------------------------------------------------------------- tiles

struct TileSample {
  Tensor tile;                        // (1, 3, T, T) in [0, 1]
  std::vector<std::uint8_t> target;   // T*T class ids, 1 = sea
  std::size_t source_id = 0;
  std::size_t origin_y = 0;
  std::size_t origin_x = 0;
};

TileSample make_tile(const LabeledImage& img, std::size_t y, std::size_t x, std::size_t tile,
                     std::size_t source_id = 0);

/// True when both classes cover at least `min_fraction` of the window.
bool has_both_classes(const GrayImage& mask, std::size_t y, std::size_t x, std::size_t tile,
                      double min_fraction);

inline constexpr double kDefaultMinFraction = 0.05;

/// Uniformly random tile containing both classes; nullopt after max_tries.
std::optional<TileSample> crop_both_classes(const LabeledImage& img, std::size_t tile,
                                            double min_fraction, Rng& rng,
                                            int max_tries = 100, std::size_t source_id = 0);

struct TrainingSetStats {
  std::size_t emitted = 0;
  std::size_t skipped = 0;  // requested samples that found no valid crop
};

/// Per image: augment, then crop samples_per_image both-class tiles; the
/// result is shuffled. Image i draws from derive_rng(seed, i), so the output
/// is independent of the number of threads.
std::vector<TileSample> build_training_set(const std::vector<LabeledImage>& images,
                                           std::size_t tile, std::size_t samples_per_image,
                                           const AugmentSpec& spec, std::uint64_t seed,
                                           double min_fraction = kDefaultMinFraction,
                                           TrainingSetStats* stats = nullptr);

std::vector<LabeledImage> load_manifest_images(const DatasetManifest& manifest);

// ---------------------------------------------------------------- synthetic data

/// Fixed constants of the coastline generator (also echoed into manifests).
struct SynthParams {
  int octaves = 4;
  double persistence = 0.5;
  int base_cells = 4;           // lattice cells across the first octave
  double min_sea_fraction = 0.3;
  double max_sea_fraction = 0.7;
  double sea_speckle = 10.0;    // std-dev of per-pixel sea noise (8-bit units)
  double land_speckle = 22.0;
  double illumination = 0.15;   // peak relative brightness change across the image

  std::vector<std::string> describe() const;
};

/// Deterministic coastline: thresholded value noise for the mask, textured
/// sea and land colours, and a smooth illumination gradient.
LabeledImage synth_generate(std::uint64_t seed, std::size_t height, std::size_t width,
                            const SynthParams& params = {});

}  // namespace deepunet
