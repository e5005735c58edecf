#include <algorithm>
#include <random>

#include "deepunet/metrics.hpp"
#include "doctest.h"

using namespace deepunet;

namespace {

std::vector<std::uint8_t> random_mask(std::size_t n, std::mt19937_64& rng, double p_sea = 0.5) {
  std::bernoulli_distribution d(p_sea);
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = d(rng) ? kSea : kLand;
  return m;
}

std::vector<std::uint8_t> complement(std::vector<std::uint8_t> m) {
  for (auto& v : m) v = v == kSea ? kLand : kSea;
  return m;
}

double pct_f1(double lp, double lr) { return 100.0 * *f1(lp / 100.0, lr / 100.0); }

}  // namespace

TEST_CASE("confusion: identity and complement") {
  std::mt19937_64 rng(1);
  const auto gt = random_mask(200, rng);
  const ConfusionCounts same = confusion(gt, gt);
  CHECK(same.fp_land == 0);
  CHECK(same.fn_land == 0);
  CHECK(same.fp_sea == 0);
  CHECK(same.fn_sea == 0);
  const ConfusionCounts wrong = confusion(complement(gt), gt);
  CHECK(wrong.tp_land == 0);
  CHECK(wrong.tp_sea == 0);
}

TEST_CASE("confusion: 4x4 hand case") {
  // L = land (0), S = sea (255)
  //   gt          pred
  //   L L L L     L L L L
  //   L L L L     L L L S      <- one land pixel missed
  //   S S S S     L L S S      <- two sea pixels called land
  //   S S S S     S S S S
  const std::vector<std::uint8_t> gt = {0,   0,   0,   0,   0,   0,   0,   0,
                                        255, 255, 255, 255, 255, 255, 255, 255};
  const std::vector<std::uint8_t> pred = {0, 0, 0,   0,   0,   0,   0,   255,
                                          0, 0, 255, 255, 255, 255, 255, 255};
  const ConfusionCounts c = confusion(pred, gt);
  CHECK(c.tp_land == 7);
  CHECK(c.fn_land == 1);
  CHECK(c.fp_land == 2);
  CHECK(c.tp_sea == 6);
  CHECK(c.fp_sea == 1);
  CHECK(c.fn_sea == 2);
  CHECK(c.total() == 16);

  const auto land = land_precision_recall(c);
  CHECK(*land.precision == doctest::Approx(7.0 / 9.0));
  CHECK(*land.recall == doctest::Approx(0.875));
  const auto overall = overall_precision_recall(c);
  CHECK(*overall.precision == 0.8125);
  CHECK(*overall.recall == 0.8125);
}

TEST_CASE("confusion: errors") {
  const std::vector<std::uint8_t> a = {0, 255}, b = {0, 255, 0}, odd = {0, 7};
  CHECK_THROWS_AS((void)confusion(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)confusion(odd, a), std::invalid_argument);
  CHECK_THROWS_AS((void)confusion(GrayImage(2, 3), GrayImage(3, 2)), std::invalid_argument);
}

TEST_CASE("precision, recall and OP edge cases") {
  std::mt19937_64 rng(2);
  const auto gt = random_mask(100, rng);
  const auto perfect = land_precision_recall(confusion(gt, gt));
  CHECK(*perfect.precision == 1.0);
  CHECK(*perfect.recall == 1.0);
  CHECK(*overall_precision_recall(confusion(gt, gt)).precision == 1.0);
  CHECK(*overall_precision_recall(confusion(complement(gt), gt)).precision == 0.0);

  const std::vector<std::uint8_t> sea(10, kSea);
  const auto none = land_precision_recall(confusion(sea, sea));
  CHECK(!none.precision.has_value());
  CHECK(!none.recall.has_value());
  CHECK(!f1(0.0, 0.0).has_value());
  CHECK(!f1(std::nullopt, 1.0).has_value());
}

TEST_CASE("f1 of reference precision and recall pairs") {
  CHECK(std::abs(pct_f1(98.90, 99.76) - 99.32) <= 0.05);
  CHECK(std::abs(pct_f1(96.02, 96.02) - 96.02) <= 0.05);
  CHECK(std::abs(pct_f1(91.73, 99.35) - 95.39) <= 0.05);
  CHECK(std::abs(pct_f1(64.74, 98.94) - 78.27) <= 0.05);
}

TEST_CASE("f1 lies between its arguments") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.001, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double p = d(rng), r = d(rng);
    const double v = *f1(p, r);
    CHECK(v >= std::min(p, r) - 1e-15);
    CHECK(v <= std::max(p, r) + 1e-15);
  }
}

TEST_CASE("OP equals OR on random masks") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng() % 300;
    const double bias = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto c = confusion(random_mask(n, rng, bias), random_mask(n, rng, bias));
    const auto o = overall_precision_recall(c);
    REQUIRE(*o.precision == *o.recall);
  }
}

TEST_CASE("class swap exchanges land and sea metrics") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto pred = random_mask(120, rng, 0.3), gt = random_mask(120, rng, 0.6);
    const auto c = confusion(pred, gt), s = confusion(complement(pred), complement(gt));
    CHECK(land_precision_recall(c).precision == sea_precision_recall(s).precision);
    CHECK(land_precision_recall(c).recall == sea_precision_recall(s).recall);
    CHECK(overall_precision_recall(c).precision == overall_precision_recall(s).precision);
  }
}

TEST_CASE("confusion is invariant to pixel order") {
  std::mt19937_64 rng(6);
  auto pred = random_mask(90, rng), gt = random_mask(90, rng);
  const auto c = confusion(pred, gt);
  std::vector<std::size_t> perm(90);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::uint8_t> p2(90), g2(90);
  for (std::size_t i = 0; i < 90; ++i) {
    p2[i] = pred[perm[i]];
    g2[i] = gt[perm[i]];
  }
  CHECK(confusion(p2, g2) == c);
}

TEST_CASE("summaries pool counts") {
  std::mt19937_64 rng(7);
  const auto gt = random_mask(64, rng);
  const EvaluationReport self = summarize({"a"}, {confusion(gt, gt)});
  CHECK(*self.aggregate.f1 == 1.0);
  CHECK(*self.aggregate.op == 1.0);

  const auto c1 = confusion(random_mask(64, rng), gt), c2 = confusion(random_mask(64, rng), gt);
  const EvaluationReport one = summarize({"x"}, {c1});
  CHECK(one.aggregate.lp == one.images[0].lp);
  CHECK(one.aggregate.f1 == one.images[0].f1);

  const EvaluationReport two = summarize({"x", "y"}, {c1, c2});
  ConfusionCounts pooled = c1;
  pooled += c2;
  CHECK(two.aggregate.lp == land_precision_recall(pooled).precision);
  CHECK(two.aggregate.pixels == 128);
  const std::string tsv = two.tsv();
  CHECK(tsv.starts_with("name\tlp\tlr\top\tor_\tf1\tpixels\n"));
  CHECK(tsv.find("\naggregate\t") != std::string::npos);
  CHECK(two.table().find("aggregate") != std::string::npos);
  CHECK_THROWS_AS((void)summarize({"x"}, {}), std::invalid_argument);
}

TEST_CASE("undefined values print as null") {
  const std::vector<std::uint8_t> sea(4, kSea);
  const auto r = summarize({"s"}, {confusion(sea, sea)});
  CHECK(r.tsv().find("s\tnull\tnull\t1\t1\tnull\t4") != std::string::npos);
}
