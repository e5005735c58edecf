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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deepunet/autograd.hpp"
#include "deepunet/model.hpp"

namespace deepunet {

struct GradCheckFailure {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double tolerance = 0;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t refined = 0;  // elements that needed a smaller step
  std::size_t skipped = 0;  // no kink-free step found; not compared
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty(); }
  std::string summary() const;
};

struct GradCheckOptions {
  /// Elements checked per input; 0 checks every element.
  std::size_t max_per_input = 0;
  std::uint64_t seed = 0;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
  /// A difference quotient at h that disagrees with the one at h/2 means a
  /// kink (ReLU, max pooling) lies within reach; the step is then divided
  /// by 10, at most this many times.
  int refinements = 0;
  /// Relative disagreement between the two steps that counts as a kink.
  double kink_tolerance = 1e-5;
};

/// Scalar-valued function of the inputs. Must record on `tape` when given
/// one and be deterministic.
using GradCheckFn =
    std::function<Tensor64(std::span<const Tensor64> inputs, Tape<double>* tape)>;

/// Compares tape gradients with central differences of step `h`.
///
/// Inputs are perturbed in place and restored. Inputs that do not require
/// a gradient are left out of the comparison.
GradCheckReport grad_check(const GradCheckFn& fn, std::span<Tensor64> inputs, double h,
                           double tol, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor = 1e-8);

struct ModelGradCheckSpec {
  ModelConfig config;
  std::size_t size = 16;    // input height and width
  std::size_t batch = 1;
  std::uint64_t seed = 0;   // weights, biases, image and labels
  double h = 1e-3;
  double tol = 1e-4;
  GradCheckOptions options{
      .max_per_input = 0, .seed = 0, .floor = 1e-6, .refinements = 3, .kink_tolerance = 1e-5};
};

/// Checks every parameter gradient of mean softmax cross-entropy for a
/// random image and random labels, in 64-bit. Labels the initial model gives
/// less than 1e-4 probability are flipped, so no pixel reaches the clamp.
GradCheckReport model_grad_check(const ModelGradCheckSpec& spec);

}  // namespace deepunet
