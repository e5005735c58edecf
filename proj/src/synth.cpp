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
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "deepunet/data.hpp"

namespace deepunet {

namespace {

double smoothstep(double t) { return t * t * (3 - 2 * t); }

// Sum of `octaves` bilinearly-interpolated random lattices; octave o has
// base_cells * 2^o cells across and weight persistence^o.
std::vector<double> value_noise(std::size_t h, std::size_t w, int octaves, double persistence,
                                int base_cells, Rng& rng) {
  std::vector<double> field(h * w, 0.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double amplitude = 1.0;
  for (int o = 0; o < octaves; ++o) {
    const std::size_t cells = static_cast<std::size_t>(base_cells) << o;
    const std::size_t side = cells + 1;
    std::vector<double> lattice(side * side);
    for (auto& v : lattice) v = uni(rng);
    for (std::size_t y = 0; y < h; ++y) {
      const double fy = static_cast<double>(y) / h * cells;
      const auto y0 = static_cast<std::size_t>(fy);
      const double ty = smoothstep(fy - y0);
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x) / w * cells;
        const auto x0 = static_cast<std::size_t>(fx);
        const double tx = smoothstep(fx - x0);
        const double a = lattice[y0 * side + x0], b = lattice[y0 * side + x0 + 1];
        const double c = lattice[(y0 + 1) * side + x0], d = lattice[(y0 + 1) * side + x0 + 1];
        field[y * w + x] += amplitude * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
      }
    }
    amplitude *= persistence;
  }
  return field;
}

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

std::vector<std::string> SynthParams::describe() const {
  std::ostringstream os;
  os << "synth: value-noise octaves=" << octaves << " persistence=" << persistence
     << " base_cells=" << base_cells << " sea_fraction=[" << min_sea_fraction << ","
     << max_sea_fraction << "] sea_speckle=" << sea_speckle << " land_speckle=" << land_speckle
     << " illumination=" << illumination;
  return {os.str()};
}

LabeledImage synth_generate(std::uint64_t seed, std::size_t height, std::size_t width,
                            const SynthParams& params) {
  if (height < 64 || width < 64) {
    throw std::invalid_argument("synth_generate: image must be at least 64x64, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  Rng rng = derive_rng(seed, 0xC0A57ULL);

  // Mask: threshold the terrain field at a random quantile inside the band.
  const auto terrain =
      value_noise(height, width, params.octaves, params.persistence, params.base_cells, rng);
  std::uniform_real_distribution<double> frac_dist(params.min_sea_fraction + 0.05,
                                                   params.max_sea_fraction - 0.05);
  const double target = frac_dist(rng);
  std::vector<double> sorted = terrain;
  const auto k = static_cast<std::size_t>(target * static_cast<double>(sorted.size()));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double threshold = sorted[k];

  // Texture fields.
  const auto land_tone = value_noise(height, width, 3, 0.5, 8, rng);
  std::normal_distribution<double> sea_noise(0.0, params.sea_speckle);
  std::normal_distribution<double> land_noise(0.0, params.land_speckle);
  std::uniform_real_distribution<double> angle_dist(0.0, 2 * std::numbers::pi);
  const double light_angle = angle_dist(rng);
  const double wave_angle = angle_dist(rng);
  const double wave_phase = angle_dist(rng);
  const double lx = std::cos(light_angle), ly = std::sin(light_angle);
  const double wx = std::cos(wave_angle), wy = std::sin(wave_angle);

  LabeledImage img{RgbImage(height, width), GrayImage(height, width)};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      const double u = (2.0 * x / (width - 1)) - 1.0, v = (2.0 * y / (height - 1)) - 1.0;
      const double light = 1.0 + params.illumination * (u * lx + v * ly) / std::numbers::sqrt2;
      const bool sea = terrain[i] < threshold;
      double r, g, b;
      if (sea) {
        // Shallow water near the shore is lighter and greener.
        const double shore = std::exp(-std::abs(threshold - terrain[i]) * 12.0);
        const double wave = 6.0 * std::sin(0.9 * (x * wx + y * wy) + wave_phase);
        const double speckle = sea_noise(rng);
        r = 28 + 30 * shore + speckle * 0.6 + wave * 0.5;
        g = 88 + 35 * shore + speckle + wave;
        b = 128 + 10 * shore + speckle + wave;
      } else {
        const double tone = land_tone[i] * 35.0;
        const double speckle = land_noise(rng);
        r = 118 + tone + speckle;
        g = 108 + 0.8 * tone + speckle * 0.9;
        b = 66 + 0.5 * tone + speckle * 0.7;
      }
      img.rgb.at(y, x, 0) = clamp_byte(r * light);
      img.rgb.at(y, x, 1) = clamp_byte(g * light);
      img.rgb.at(y, x, 2) = clamp_byte(b * light);
      img.mask.pixels[i] = sea ? kSea : kLand;
    }
  }
  return img;
}

}  // namespace deepunet
