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

#include "deepunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "deepunet/ops.hpp"

namespace deepunet {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "checked " << checked << " elements, max relative error " << max_rel_error
     << " (tolerance " << tolerance << "), " << failures.size() << " failing";
  if (refined > 0 || skipped > 0) {
    os << ", " << refined << " refined near kinks, " << skipped << " skipped";
  }
  const std::size_t shown = std::min<std::size_t>(failures.size(), 8);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& f = failures[i];
    os << "\n  input " << f.input << " [" << f.index << "]: tape " << f.analytic << " vs fd "
       << f.numeric << " (rel " << f.rel_error << ")";
  }
  return os.str();
}

GradCheckReport grad_check(const GradCheckFn& fn, std::span<Tensor64> inputs, double h, double tol,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = tol;

  std::vector<std::vector<double>> analytic(inputs.size());
  {
    for (auto& t : inputs) {
      if (t.requires_grad()) t.zero_grad();
    }
    Tape<double> tape;
    const Tensor64 out = fn(inputs, &tape);
    tape.backward(out);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      const auto g = inputs[i].ensure_grad();
      analytic[i].assign(g.begin(), g.end());
    }
  }

  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto values = inputs[i].data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_per_input != 0 && coords.size() > options.max_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_per_input);
      std::sort(coords.begin(), coords.end());
    }
    auto eval_at = [&](std::size_t idx, double offset) {
      const double saved = values[idx];
      values[idx] = saved + offset;
      const double v = fn(inputs, nullptr).item();
      values[idx] = saved;
      return v;
    };
    for (std::size_t idx : coords) {
      double step = h;
      double numeric = 0;
      bool smooth = false;
      const double f0 = options.refinements > 0 ? eval_at(idx, 0) : 0;
      for (int r = 0; r <= options.refinements; ++r, step /= 10) {
        const double p1 = eval_at(idx, step), m1 = eval_at(idx, -step);
        numeric = (p1 - m1) / (2 * step);
        if (options.refinements == 0) {
          smooth = true;
          break;
        }
        // On a smooth stretch the half-step central difference agrees and
        // the forward/backward gap shrinks linearly with the step.
        const double p2 = eval_at(idx, step / 2), m2 = eval_at(idx, -step / 2);
        const double half = (p2 - m2) / step;
        const double gap1 = (p1 - f0) / step - (f0 - m1) / step;
        const double gap2 = (p2 - f0) / (step / 2) - (f0 - m2) / (step / 2);
        const double bound =
            options.kink_tolerance * std::max({std::abs(numeric), std::abs(half), options.floor});
        if (std::abs(numeric - half) <= bound && std::abs(gap1 - 2 * gap2) <= bound) {
          smooth = true;
          break;
        }
      }
      if (smooth && step != h) ++report.refined;
      if (!smooth) {
        ++report.skipped;
        continue;
      }
      ++report.checked;
      const double a = analytic[i][idx];
      const double rel = relative_error(a, numeric, options.floor);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (rel > tol) report.failures.push_back({i, idx, a, numeric, rel});
    }
  }
  return report;
}

namespace {
constexpr double kLabelFloor = 1e-4;
}  // namespace

GradCheckReport model_grad_check(const ModelGradCheckSpec& spec) {
  Model64 model = build(spec.config, spec.seed).cast<double>();
  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> bias(-0.1, 0.1), pixel(0.0, 1.0);
  std::vector<Tensor64> inputs;
  for (auto& p : model.parameters()) {
    Tensor64 t = p.tensor;
    if (p.name.ends_with(".bias")) {
      for (double& v : t.data()) v = bias(rng);
    }
    inputs.push_back(t);
  }
  Tensor64 image(Shape{spec.batch, static_cast<std::size_t>(spec.config.input_channels), spec.size,
                       spec.size});
  for (double& v : image.data()) v = pixel(rng);
  std::vector<std::uint8_t> labels(spec.batch * spec.size * spec.size);
  std::bernoulli_distribution coin(0.5);
  for (auto& l : labels) l = coin(rng) ? 1 : 0;
  // Keep every pixel far from the loss clamp, where the fused gradient and
  // the clamped value part ways: a drawn class the model all but rules out
  // is swapped for the other one.
  {
    const Tensor64 p0 = forward(model, image);
    const std::size_t plane = spec.size * spec.size;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::size_t n = i / plane, q = i % plane;
      if (p0.data()[(n * 2 + labels[i]) * plane + q] < kLabelFloor) labels[i] ^= 1;
    }
  }

  // Parameters are perturbed through `inputs`, which share storage with the model.
  const GradCheckFn fn = [&](std::span<const Tensor64>, Tape<double>* tape) {
    const Tensor64 probs = forward(model, image, tape);
    return ops::cross_entropy_loss(probs, labels, tape);
  };
  return grad_check(fn, inputs, spec.h, spec.tol, spec.options);
}

}  // namespace deepunet
