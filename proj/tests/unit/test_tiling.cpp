#include <cmath>
#include <random>

#include "deepunet/tiling.hpp"
#include "doctest.h"

using namespace deepunet;

namespace {

std::vector<int> coverage(const TilePlan& p) {
  std::vector<int> cov(p.padded_height() * p.padded_width(), 0);
  for (const auto& o : p.origins)
    for (std::size_t y = 0; y < p.tile; ++y)
      for (std::size_t x = 0; x < p.tile; ++x) ++cov[(o.y + y) * p.padded_width() + o.x + x];
  return cov;
}

bool covers_image(const TilePlan& p) {
  const auto cov = coverage(p);
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x)
      if (cov[(y + p.pad_top) * p.padded_width() + x + p.pad_left] < 1) return false;
  return true;
}

RgbImage random_rgb(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RgbImage img(h, w);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng());
  return img;
}

ModelConfig small() {
  ModelConfig c;
  c.depth = 2;
  c.wide_channels = 8;
  c.narrow_channels = 4;
  return c;
}

}  // namespace

TEST_CASE("mirror_pad") {
  GrayImage row(1, 3);
  row.pixels = {10, 20, 30};
  const GrayImage p = mirror_pad(row, 0, 0, 2, 0);
  const std::vector<std::uint8_t> want = {30, 20, 10, 20, 30};
  CHECK(p.pixels == want);
  const GrayImage r = mirror_pad(row, 0, 0, 0, 2);
  CHECK(r.pixels == std::vector<std::uint8_t>{10, 20, 30, 20, 10});
  const RgbImage img = random_rgb(5, 7, 1);
  CHECK(mirror_pad(img, 0, 0, 0, 0) == img);
  CHECK_THROWS_AS((void)mirror_pad(row, 0, 0, 3, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)mirror_pad(row, 1, 0, 0, 0), std::invalid_argument);

  const RgbImage big = mirror_pad(img, 2, 3, 4, 1);
  CHECK(big.height == 10);
  CHECK(big.width == 12);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 7; ++x)
      for (std::size_t c = 0; c < 3; ++c) CHECK(big.at(y + 2, x + 4, c) == img.at(y, x, c));
  CHECK(big.at(0, 4, 1) == img.at(2, 0, 1));
}

TEST_CASE("plan_tiles: single tile") {
  const TilePlan p = plan_tiles(64, 64, 64, 64);
  CHECK(p.origins.size() == 1);
  CHECK(p.pad_top + p.pad_bottom + p.pad_left + p.pad_right == 0);
}

TEST_CASE("plan_tiles: 1000x1000, T 640, S 320") {
  const TilePlan p = plan_tiles(1000, 1000, 640, 320);
  // n = ceil(360 / 320) + 1 = 3 per axis; padded extent 2*320 + 640 = 1280
  CHECK(p.padded_height() == 1280);
  CHECK(p.padded_width() == 1280);
  CHECK(p.pad_top == 140);
  CHECK(p.pad_bottom == 140);
  REQUIRE(p.origins.size() == 9);
  // bottom row first, left to right
  CHECK(p.origins[0] == TileOrigin{640, 0});
  CHECK(p.origins[1] == TileOrigin{640, 320});
  CHECK(p.origins[2] == TileOrigin{640, 640});
  CHECK(p.origins[8] == TileOrigin{0, 640});
  const auto cov = coverage(p);
  for (int c : cov) CHECK(c >= 1);
  CHECK(covers_image(p));
}

TEST_CASE("plan_tiles: random plans cover every pixel") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const std::size_t T = 4 * (1 + rng() % 16), S = 1 + rng() % T;
    const std::size_t H = 1 + rng() % 150, W = 1 + rng() % 150;
    const TilePlan p = plan_tiles(H, W, T, S);
    CAPTURE(H);
    CAPTURE(W);
    CAPTURE(T);
    CAPTURE(S);
    CHECK(covers_image(p));
    CHECK((p.padded_height() - T) % S == 0);
    CHECK(p.pad_bottom - p.pad_top <= 1);
    CHECK(p.pad_right - p.pad_left <= 1);
  }
  CHECK_THROWS_AS((void)plan_tiles(10, 10, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)plan_tiles(10, 10, 8, 9), std::invalid_argument);
}

TEST_CASE("gaussian_weights") {
  const auto w = gaussian_weights(5, 2.0);
  CHECK(w[2 * 5 + 2] == 1.0);
  CHECK(w[2 * 5 + 4] == doctest::Approx(std::exp(-0.5)));
  CHECK(w[2 * 5 + 4] == doctest::Approx(0.6065).epsilon(1e-4));
  const auto even = gaussian_weights(4, 1.0);
  CHECK(even[1 * 4 + 1] == even[2 * 4 + 2]);
  for (double v : gaussian_weights(64, 64.0 / 6)) CHECK(v > 0);
}

TEST_CASE("stitcher: two overlapping tiles match a hand blend") {
  // 1x6 strip as two 4x4 tiles... use a 4x6 image, T 4, S 2: origins x = 0, 2
  const TilePlan p = plan_tiles(4, 6, 4, 2);
  REQUIRE(p.origins.size() == 2);
  REQUIRE(p.pad_left == 0);
  const auto w = gaussian_weights(4, 1.5);
  Stitcher s(p, w);
  std::vector<float> a(2 * 16), b(2 * 16);
  for (std::size_t i = 0; i < 16; ++i) {
    a[i] = 0.8f;
    a[16 + i] = 0.2f;
    b[i] = 0.3f;
    b[16 + i] = 0.7f;
  }
  s.add(0, a);
  s.add(1, b);
  const Tensor out = s.finish();
  CHECK(out.shape() == Shape{1, 2, 4, 6});
  // pixel (1, 3): tile 0 local (1, 3), tile 1 local (1, 1)
  const double w1 = w[1 * 4 + 3], w2 = w[1 * 4 + 1];
  const double land = (w1 * 0.8f + w2 * 0.3f) / (w1 + w2);
  CHECK(out.at(0, 0, 1, 3) == doctest::Approx(land).epsilon(1e-7));
  CHECK(out.at(0, 1, 1, 3) == doctest::Approx(1.0 - land).epsilon(1e-6));
  CHECK(out.at(0, 0, 0, 0) == 0.8f);
  CHECK(out.at(0, 0, 0, 5) == 0.3f);
}

TEST_CASE("stitcher: agreeing tiles, channel sums, convex bounds, visiting order") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 2 * (2 + rng() % 6), S = 1 + rng() % T;
    const TilePlan p = plan_tiles(3 + rng() % 30, 3 + rng() % 30, T, S);
    if (p.pad_top >= p.height || p.pad_left >= p.width) continue;
    const auto w = gaussian_weights(T, T / 6.0);
    std::vector<std::vector<float>> tiles;
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (std::size_t i = 0; i < p.origins.size(); ++i) {
      std::vector<float> t(2 * T * T);
      for (std::size_t k = 0; k < T * T; ++k) {
        t[k] = d(rng);
        t[T * T + k] = 1.0f - t[k];
      }
      tiles.push_back(t);
    }
    Stitcher fwd(p, w), rev(p, w), agree(p, w);
    for (std::size_t i = 0; i < tiles.size(); ++i) fwd.add(i, tiles[i]);
    for (std::size_t i = tiles.size(); i-- > 0;) rev.add(i, tiles[i]);
    std::vector<float> same(2 * T * T);
    for (std::size_t k = 0; k < T * T; ++k) {
      same[k] = 0.375f;
      same[T * T + k] = 0.625f;
    }
    for (std::size_t i = 0; i < tiles.size(); ++i) agree.add(i, same);
    const Tensor a = fwd.finish(), b = rev.finish(), c = agree.finish();
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) <= 1e-6f);
    for (std::size_t y = 0; y < p.height; ++y)
      for (std::size_t x = 0; x < p.width; ++x) {
        CHECK(std::abs(a.at(0, 0, y, x) + a.at(0, 1, y, x) - 1.0f) <= 1e-5f);
        CHECK(c.at(0, 0, y, x) == 0.375f);
        CHECK(c.at(0, 1, y, x) == 0.625f);
        float lo = 1, hi = 0;
        for (std::size_t i = 0; i < p.origins.size(); ++i) {
          const auto& o = p.origins[i];
          const std::size_t py = y + p.pad_top, px = x + p.pad_left;
          if (py < o.y || px < o.x || py >= o.y + T || px >= o.x + T) continue;
          const float v = tiles[i][(py - o.y) * T + (px - o.x)];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        CHECK(a.at(0, 0, y, x) >= lo - 1e-6f);
        CHECK(a.at(0, 0, y, x) <= hi + 1e-6f);
      }
  }
}

TEST_CASE("stitcher: no overlap equals tile concatenation") {
  const TilePlan p = plan_tiles(8, 12, 4, 4);
  REQUIRE(p.origins.size() == 6);
  Stitcher s(p, gaussian_weights(4, 1.0));
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<float> t(32);
    for (std::size_t k = 0; k < 16; ++k) {
      t[k] = 0.1f * static_cast<float>(i) + 0.001f * static_cast<float>(k);
      t[16 + k] = 1.0f - t[k];
    }
    s.add(i, t);
  }
  const Tensor out = s.finish();
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& o = p.origins[i];
    for (std::size_t k = 0; k < 16; ++k)
      CHECK(out.at(0, 0, o.y + k / 4, o.x + k % 4) == 0.1f * static_cast<float>(i) + 0.001f * static_cast<float>(k));
  }
}

TEST_CASE("predict_image: single tile equals direct inference bitwise") {
  const Model m = build(small(), 3);
  const RgbImage img = random_rgb(32, 32, 5);
  TilingOptions opt;
  opt.tile = 32;
  opt.stride = 32;
  const Tensor tiled = predict_image(m, img, opt);
  const Tensor direct = forward(m, to_tensor(img));
  REQUIRE(tiled.shape() == direct.shape());
  CHECK(std::equal(tiled.data().begin(), tiled.data().end(), direct.data().begin()));
}

TEST_CASE("predict_image: shape, batching invariance, tile divisibility") {
  const Model m = build(small(), 4);
  const RgbImage img = random_rgb(37, 51, 6);
  TilingOptions opt;
  opt.tile = 16;
  opt.batch = 1;
  const Tensor a = predict_image(m, img, opt);
  opt.batch = 5;
  const Tensor b = predict_image(m, img, opt);
  CHECK(a.shape() == Shape{1, 2, 37, 51});
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  opt.tile = 18;
  CHECK_THROWS_AS((void)predict_image(m, img, opt), std::invalid_argument);
}

TEST_CASE("binarize") {
  Tensor p(Shape{1, 2, 1, 3}, {0.1f, 0.5f, 0.7f, 0.9f, 0.5f, 0.3f});
  const GrayImage g = binarize(p);
  CHECK(g.pixels == std::vector<std::uint8_t>{kSea, kLand, kLand});
}
