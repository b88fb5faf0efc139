/* Copyright 2026 The paramaug Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "paramaug/tensor.hpp"

namespace paramaug {

struct GradReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t coordinates = 0;
  /// Flat index of the coordinate with the largest error.
  std::size_t worst_index = 0;
  /// Denominator floor used for the relative errors.
  double floor = 1e-8;
};

struct NamedGradReport {
  std::string name;
  GradReport report;
};

/// |a - b| / max(|a|, |b|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Compares backward() against central differences with step `h` for every
/// coordinate of `x`. Non-scalar outputs of `f` are reduced to a scalar by a
/// fixed pseudo-random projection derived from `probe_seed`.
GradReport check_gradients(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double h = 1e-5,
                           std::uint64_t probe_seed = 0);

/// Multi-tensor form: `f` closes over `params` (leaves with requires_grad);
/// each is perturbed in place and restored. One report per tensor, in order.
///
/// A central difference carries rounding noise of roughly eps * |F| / h,
/// where F is the scalarized objective. With `scale_floor` > 0 the
/// relative-error floor becomes max(1e-8, scale_floor * (1 + |F|)), so
/// gradients far below the objective's scale are compared absolutely.
std::vector<GradReport> check_gradients(const std::function<Tensor()>& f,
                                        const std::vector<Tensor>& params,
                                        double h = 1e-5,
                                        std::uint64_t probe_seed = 0,
                                        double scale_floor = 0.0);

}  // namespace paramaug
