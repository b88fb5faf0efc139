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
#include <vector>

#include "paramaug/layers/module.hpp"

namespace paramaug::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with bias-corrected moments and decoupled weight decay:
///
///   p <- p - lr * wd * p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
///
/// Parameters are updated in place through their tensor handles. A tensor
/// that received no gradient in the last backward pass is treated as having
/// a zero gradient.
class AdamW {
 public:
  AdamW(std::vector<layers::NamedTensor> params, AdamWConfig config = {});

  /// Throws NonFiniteError naming the parameter if any gradient entry is
  /// NaN or infinite; no parameter is modified in that case.
  void step(double lr, double weight_decay);

  void zero_grad();
  std::size_t steps() const { return t_; }
  const std::vector<layers::NamedTensor>& params() const { return params_; }

 private:
  std::vector<layers::NamedTensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Global L2 norm of all gradients.
double grad_norm(const std::vector<layers::NamedTensor>& params);

/// Scales every gradient so the global norm is at most `max_norm`. Returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<layers::NamedTensor>& params, double max_norm);

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then a half cosine
/// from `base_lr` down to `final_fraction * base_lr` at `total_steps`.
/// Throws ContractError unless 0 <= step <= total_steps,
/// warmup_steps < total_steps and final_fraction is in [0, 1].
double cosine_lr(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                 double base_lr, double final_fraction);

}  // namespace paramaug::train
