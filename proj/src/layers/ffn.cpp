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

#include "paramaug/layers/ffn.hpp"

#include <cmath>
#include <optional>

#include "paramaug/ops.hpp"

namespace paramaug::layers {

Tensor swiglu_ffn(const Tensor& x, const Tensor& gate_w, const Tensor& up_w,
                  const Tensor& down_w) {
  if (gate_w.shape() != up_w.shape()) {
    throw ShapeError("swiglu: gate " + gate_w.shape().str() + " vs up " +
                     up_w.shape().str());
  }
  if (down_w.rank() != 2 || gate_w.rank() != 2 ||
      down_w.dim(0) != gate_w.dim(1)) {
    throw ShapeError("swiglu: down projection " + down_w.shape().str() +
                         " does not follow " + gate_w.shape().str(),
                     0);
  }
  Tensor h = mul(silu(matmul(x, gate_w)), matmul(x, up_w));
  return matmul(h, down_w);
}

Tensor lecun_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  return Tensor::uniform(shape, rng, -bound, bound, true);
}

SwiGluFfn::SwiGluFfn(std::size_t d_model, std::size_t d_ff, Rng& rng)
    : gate_(lecun_uniform(Shape{d_model, d_ff}, d_model, rng)),
      up_(lecun_uniform(Shape{d_model, d_ff}, d_model, rng)),
      down_(lecun_uniform(Shape{d_ff, d_model}, d_ff, rng)) {}

Tensor SwiGluFfn::forward(const Tensor& x) const {
  return swiglu_ffn(x, gate_, up_, down_);
}

void SwiGluFfn::collect_parameters(const std::string& prefix,
                                   std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "gate_proj", gate_});
  out.push_back({prefix + "up_proj", up_});
  out.push_back({prefix + "down_proj", down_});
}

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::Gate:
      return "gate";
    case Placement::UpProj:
      return "up_proj";
    case Placement::DownProj:
      return "down_proj";
  }
  return "?";
}

Placement parse_placement(std::string_view s) {
  if (s == "gate") return Placement::Gate;
  if (s == "up_proj") return Placement::UpProj;
  if (s == "down_proj") return Placement::DownProj;
  throw ValidationError("placement", "unknown MoE placement '" +
                                         std::string(s) +
                                         "' (expected gate, up_proj, down_proj)");
}

Routing route_top1(std::span<const double> probs, std::size_t tokens,
                   std::size_t n_experts, double capacity_factor) {
  if (!(capacity_factor > 0.0)) {
    throw ContractError("routing: capacity factor must be positive");
  }
  if (n_experts == 0 || probs.size() != tokens * n_experts) {
    throw ShapeError("routing: probability table does not match " +
                     std::to_string(tokens) + " x " + std::to_string(n_experts));
  }
  Routing r;
  RoutingStats& s = r.stats;
  s.tokens = tokens;
  s.capacity = static_cast<std::size_t>(std::ceil(
      capacity_factor * static_cast<double>(tokens) /
      static_cast<double>(n_experts)));
  s.dispatched.assign(n_experts, 0);
  s.kept.assign(n_experts, 0);
  s.mean_prob.assign(n_experts, 0.0);
  r.expert.resize(tokens);
  r.kept.resize(tokens);
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* row = probs.data() + t * n_experts;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n_experts; ++j)
      if (row[j] > row[best]) best = j;
    for (std::size_t j = 0; j < n_experts; ++j) s.mean_prob[j] += row[j];
    r.expert[t] = best;
    ++s.dispatched[best];
    if (s.kept[best] < s.capacity) {
      ++s.kept[best];
      r.kept[t] = true;
    } else {
      ++s.dropped;
    }
  }
  s.fraction.resize(n_experts);
  for (std::size_t j = 0; j < n_experts; ++j) {
    s.fraction[j] =
        static_cast<double>(s.dispatched[j]) / static_cast<double>(tokens);
    s.mean_prob[j] /= static_cast<double>(tokens);
    s.aux_loss += s.fraction[j] * s.mean_prob[j];
  }
  s.aux_loss *= static_cast<double>(n_experts);
  return r;
}

MoeFfn::MoeFfn(std::size_t d_model, std::size_t d_ff, const MoeConfig& config,
               Rng& rng)
    : d_model_(d_model), d_ff_(d_ff), config_(config) {
  if (config_.n_experts == 0) {
    throw ValidationError("n_experts", "need at least one expert");
  }
  if (config_.k != 1) {
    throw ValidationError("k", "only top-1 routing is supported");
  }
  if (!(config_.capacity_factor > 0.0)) {
    throw ValidationError("capacity_factor", "must be positive");
  }
  if (!(config_.aux_loss_weight >= 0.0)) {
    throw ValidationError("aux_loss_weight", "must be non-negative");
  }
  const std::size_t n = config_.n_experts;
  router_ = Tensor::normal(Shape{d_model, n}, rng,
                           1.0 / std::sqrt(static_cast<double>(d_model)), true);
  auto bank = [&](Placement p, const Shape& shape, std::size_t fan_in) {
    std::vector<Tensor> b;
    const std::size_t copies = config_.placement == p ? n : 1;
    for (std::size_t i = 0; i < copies; ++i)
      b.push_back(lecun_uniform(shape, fan_in, rng));
    return b;
  };
  gate_ = bank(Placement::Gate, Shape{d_model, d_ff}, d_model);
  up_ = bank(Placement::UpProj, Shape{d_model, d_ff}, d_model);
  down_ = bank(Placement::DownProj, Shape{d_ff, d_model}, d_ff);
}

MoeOutput MoeFfn::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != d_model_) {
    throw ShapeError("moe ffn: input " + x.shape().str() + ", expected [T," +
                         std::to_string(d_model_) + "]",
                     1);
  }
  const std::size_t tokens = x.dim(0);
  if (tokens == 0) throw ContractError("moe ffn: no tokens");
  const std::size_t n = config_.n_experts;

  Tensor probs = softmax(matmul(x, router_), 1);
  Routing routing = route_top1(probs.data(), tokens, n, config_.capacity_factor);

  std::optional<Tensor> y;
  for (std::size_t e = 0; e < n; ++e) {
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < tokens; ++t)
      if (routing.kept[t] && routing.expert[t] == e) rows.push_back(t);
    if (rows.empty()) continue;
    std::vector<std::size_t> cols(rows.size(), e);
    Tensor h = swiglu_ffn(index_select(x, rows), pick(gate_, e), pick(up_, e),
                          pick(down_, e));
    Tensor part = scatter_rows(scale_rows(h, gather(probs, rows, cols)), rows,
                               tokens);
    y = y ? add(*y, part) : part;
  }

  Tensor f(Shape{n}, routing.stats.fraction);
  Tensor aux = scale(sum(mul(mean(probs, 0), f)), static_cast<double>(n));
  return MoeOutput{y ? *y : Tensor::zeros(Shape{tokens, d_model_}), aux,
                   std::move(routing.stats)};
}

void MoeFfn::collect_parameters(const std::string& prefix,
                                std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "router", router_});
  auto emit = [&](const char* name, Placement which,
                  const std::vector<Tensor>& bank) {
    const bool replicated = config_.placement == which;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      std::string n = prefix + name;
      if (replicated) n += ".expert" + std::to_string(i);
      out.push_back({n, bank[i]});
    }
  };
  emit("gate_proj", Placement::Gate, gate_);
  emit("up_proj", Placement::UpProj, up_);
  emit("down_proj", Placement::DownProj, down_);
}

}  // namespace paramaug::layers
