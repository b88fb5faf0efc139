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

#include "paramaug/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "paramaug/ops.hpp"
#include "paramaug/rng.hpp"

namespace paramaug {

namespace {

// Scalarizes f's output; the probe is built once so that every evaluation
// uses the same projection.
class Objective {
 public:
  Objective(const std::function<Tensor()>& f, std::uint64_t seed)
      : f_(f), seed_(seed) {}

  Tensor operator()() {
    Tensor y = f_();
    if (y.numel() == 1) return reshape(y, Shape{});
    if (!probe_ || probe_->shape() != y.shape()) {
      Rng rng(seed_);
      probe_ = Tensor::uniform(y.shape(), rng, -1.0, 1.0);
    }
    return sum(mul(y, *probe_));
  }

 private:
  const std::function<Tensor()>& f_;
  std::uint64_t seed_;
  std::optional<Tensor> probe_;
};

double checked(double v, std::size_t index, const char* what) {
  if (!std::isfinite(v)) {
    throw NonFiniteError(std::string("gradient check: non-finite ") + what +
                             " at coordinate " + std::to_string(index),
                         index);
  }
  return v;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradReport> check_gradients(const std::function<Tensor()>& f,
                                        const std::vector<Tensor>& params,
                                        double h, std::uint64_t probe_seed,
                                        double scale_floor) {
  if (!(h > 0.0)) throw ContractError("gradient check: step must be > 0");
  for (const Tensor& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw ContractError(
          "gradient check: parameters must be leaves with requires_grad");
    }
  }
  Objective objective(f, probe_seed);

  std::vector<std::vector<double>> analytic;
  double floor = 1e-8;
  {
    std::vector<std::vector<double>> saved;
    for (const Tensor& p : params) {
      saved.emplace_back(p.grad().begin(), p.grad().end());
      p.impl().grad.clear();
    }
    Tensor loss = objective();
    checked(loss.item(), 0, "objective");
    if (scale_floor > 0.0)
      floor = std::max(floor, scale_floor * (1.0 + std::abs(loss.item())));
    if (loss.requires_grad()) backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& p = params[i];
      std::vector<double> g(p.numel(), 0.0);
      if (p.has_grad()) g.assign(p.grad().begin(), p.grad().end());
      analytic.push_back(std::move(g));
      p.impl().grad = std::move(saved[i]);
    }
  }

  NoGradGuard no_grad;
  std::vector<GradReport> reports;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    GradReport rep;
    rep.floor = floor;
    rep.coordinates = p.numel();
    double total = 0.0;
    auto data = p.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double orig = data[k];
      data[k] = orig + h;
      const double up = checked(objective().item(), k, "objective");
      data[k] = orig - h;
      const double down = checked(objective().item(), k, "objective");
      data[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = checked(analytic[i][k], k, "analytic gradient");
      const double err = relative_error(a, numeric, floor);
      total += err;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_index = k;
      }
    }
    rep.mean_rel_error =
        rep.coordinates ? total / static_cast<double>(rep.coordinates) : 0.0;
    reports.push_back(rep);
  }
  return reports;
}

GradReport check_gradients(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double h,
                           std::uint64_t probe_seed) {
  Tensor leaf = x.clone(true);
  std::function<Tensor()> g = [&f, &leaf]() { return f(leaf); };
  return check_gradients(g, {leaf}, h, probe_seed).front();
}

}  // namespace paramaug
