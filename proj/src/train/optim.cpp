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

#include "paramaug/train/optim.hpp"

#include <cmath>
#include <numbers>

#include "paramaug/error.hpp"

namespace paramaug::train {

AdamW::AdamW(std::vector<layers::NamedTensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr, double weight_decay) {
  for (const auto& p : params_) {
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NonFiniteError("adamw: non-finite gradient " + std::to_string(g[i]) +
                                 " in parameter '" + p.name + "' at index " +
                                 std::to_string(i),
                             i);
      }
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    const auto g = t.grad();
    auto p = t.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      p[i] -= lr * weight_decay * p[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double grad_norm(const std::vector<layers::NamedTensor>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<layers::NamedTensor>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_grad_norm: max_norm must be positive");
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

double cosine_lr(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                 double base_lr, double final_fraction) {
  if (warmup_steps >= total_steps) {
    throw ContractError("cosine_lr: warmup_steps " + std::to_string(warmup_steps) +
                        " must be below total_steps " + std::to_string(total_steps));
  }
  if (step > total_steps) {
    throw ContractError("cosine_lr: step " + std::to_string(step) + " exceeds total_steps " +
                        std::to_string(total_steps));
  }
  if (!(final_fraction >= 0.0 && final_fraction <= 1.0))
    throw ContractError("cosine_lr: final_fraction must lie in [0, 1]");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  const double cos_term = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return base_lr * (final_fraction + (1.0 - final_fraction) * cos_term);
}

}  // namespace paramaug::train
