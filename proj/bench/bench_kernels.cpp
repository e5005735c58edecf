// Serial reference kernels vs the OpenMP ones on layer shapes from the
// desk-size and full-size networks.
//
//   bench_kernels [--reps N] [--quick]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deepunet/kernels.hpp"

using namespace deepunet;
using namespace deepunet::kernels;

namespace {

std::vector<float> noise(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// best of `reps`, in milliseconds
double time_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

struct Case {
  const char* name;
  Shape x, w;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conv / pool kernel timings, serial reference vs OpenMP"};
  int reps = 3;
  bool quick = false;
  app.add_option("--reps", reps, "repetitions per kernel (best is reported)");
  app.add_flag("--quick", quick, "small shapes only");
  CLI11_PARSE(app, argc, argv);

  std::vector<Case> cases = {
      {"stem 3->64 @64", {8, 3, 64, 64}, {64, 3, 3, 3}},
      {"down 32->64 @32", {8, 32, 32, 32}, {64, 32, 3, 3}},
      {"up 64->64 @16", {8, 64, 16, 16}, {64, 64, 3, 3}},
      {"head 32->2 1x1 @64", {8, 32, 64, 64}, {2, 32, 1, 1}},
  };
  if (!quick) cases.push_back({"full 64->64 @160", {1, 64, 160, 160}, {64, 64, 3, 3}});

  std::printf("threads %d\n", omp_get_max_threads());
  std::printf("%-22s %12s %12s %8s %12s %12s %8s %10s\n", "conv", "ref fwd ms", "omp fwd ms", "x",
              "ref bwd ms", "omp bwd ms", "x", "max |diff|");
  std::mt19937 rng(7);
  for (const auto& c : cases) {
    const ConvGeometry g{c.x, c.w, 1, c.w.h / 2};
    const Shape os = g.output();
    const auto x = noise(c.x.numel(), rng), w = noise(c.w.numel(), rng), b = noise(c.w.n, rng);
    const auto dout = noise(os.numel(), rng);
    std::vector<float> y1(os.numel()), y2(os.numel());
    std::vector<float> dx(x.size()), dw(w.size()), db(b.size());

    const double rf = time_ms(reps, [&] { reference::conv2d_forward<float>(g, x, w, b, y1); });
    const double pf = time_ms(reps, [&] { conv2d_forward<float>(g, x, w, b, y2); });
    const double rb = time_ms(reps, [&] {
      std::fill(dx.begin(), dx.end(), 0.0f);
      std::fill(dw.begin(), dw.end(), 0.0f);
      std::fill(db.begin(), db.end(), 0.0f);
      reference::conv2d_backward<float>(g, x, w, dout, dx, dw, db);
    });
    const double pb = time_ms(reps, [&] {
      std::fill(dx.begin(), dx.end(), 0.0f);
      std::fill(dw.begin(), dw.end(), 0.0f);
      std::fill(db.begin(), db.end(), 0.0f);
      conv2d_backward<float>(g, x, w, dout, dx, dw, db);
    });
    float diff = 0;
    for (std::size_t i = 0; i < y1.size(); ++i) diff = std::max(diff, std::abs(y1[i] - y2[i]));
    std::printf("%-22s %12.2f %12.2f %8.2f %12.2f %12.2f %8.2f %10.2e\n", c.name, rf, pf, rf / pf, rb,
                pb, rb / pb, diff);
  }

  // pooling has no reduction to reorder, so outputs match exactly
  const Shape ps{8, 64, 64, 64};
  const auto px = noise(ps.numel(), rng);
  const Shape pos{ps.n, ps.c, ps.h / 2, ps.w / 2};
  std::vector<float> p1(pos.numel()), p2(pos.numel());
  std::vector<std::uint32_t> a1(pos.numel()), a2(pos.numel());
  const double rp = time_ms(reps, [&] { reference::maxpool2x2_forward<float>(ps, px, p1, a1); });
  const double pp = time_ms(reps, [&] { maxpool2x2_forward<float>(ps, px, p2, a2); });
  std::printf("%-22s %12.2f %12.2f %8.2f %12s %12s %8s %10s\n", "maxpool 64ch @64", rp, pp, rp / pp, "-", "-",
              "-", p1 == p2 && a1 == a2 ? "equal" : "DIFFER");
  return 0;
}
