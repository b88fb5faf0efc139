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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paramaug/layers/module.hpp"
#include "paramaug/rng.hpp"

namespace paramaug::layers {

/// y = (silu(x gate_w) * (x up_w)) down_w for x [T,d_model].
Tensor swiglu_ffn(const Tensor& x, const Tensor& gate_w, const Tensor& up_w,
                  const Tensor& down_w);

/// Uniform(-b, b) with b = sqrt(3 / fan_in): unit-variance linear layers.
Tensor lecun_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

class SwiGluFfn {
 public:
  SwiGluFfn(std::size_t d_model, std::size_t d_ff, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix,
                          std::vector<NamedTensor>& out) const;

  const Tensor& gate_w() const { return gate_; }
  const Tensor& up_w() const { return up_; }
  const Tensor& down_w() const { return down_; }

 private:
  Tensor gate_, up_, down_;
};

/// Which SwiGLU projection is replicated per expert.
enum class Placement { Gate, UpProj, DownProj };

std::string_view to_string(Placement p);
/// Accepts "gate", "up_proj", "down_proj"; throws ValidationError otherwise.
Placement parse_placement(std::string_view s);

struct MoeConfig {
  std::size_t n_experts = 4;
  std::size_t k = 1;
  double capacity_factor = 1.25;
  double aux_loss_weight = 0.01;
  Placement placement = Placement::UpProj;
};

struct RoutingStats {
  std::size_t tokens = 0;
  std::size_t capacity = 0;
  /// Argmax assignments per expert, before capacity is applied.
  std::vector<std::size_t> dispatched;
  /// Tokens actually computed per expert.
  std::vector<std::size_t> kept;
  std::size_t dropped = 0;
  /// f_i: dispatched fraction per expert.
  std::vector<double> fraction;
  /// P_i: mean router probability per expert.
  std::vector<double> mean_prob;
  double aux_loss = 0.0;
};

struct MoeOutput {
  Tensor y;         // [T, d_model]; zero rows for dropped tokens
  Tensor aux_loss;  // scalar N * sum_i f_i P_i
  RoutingStats stats;
};

/// Top-1 routing over (d_model x N) router logits with expert capacity
/// ceil(capacity_factor * T / N) per batch. Ties go to the lowest index;
/// tokens are admitted in order until an expert is full.
struct Routing {
  std::vector<std::size_t> expert;  // argmax per token
  std::vector<bool> kept;
  RoutingStats stats;
};
Routing route_top1(std::span<const double> probs, std::size_t tokens,
                   std::size_t n_experts, double capacity_factor);

/// Sparse FFN: one expert per token; experts differ only in the projection
/// named by `placement`, the other two are shared.
class MoeFfn {
 public:
  MoeFfn(std::size_t d_model, std::size_t d_ff, const MoeConfig& config,
         Rng& rng);

  MoeOutput forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix,
                          std::vector<NamedTensor>& out) const;

  const MoeConfig& config() const { return config_; }
  std::size_t d_model() const { return d_model_; }
  std::size_t d_ff() const { return d_ff_; }
  const Tensor& router_w() const { return router_; }
  /// N entries for the replicated projection, one for the shared ones.
  const std::vector<Tensor>& gate_w() const { return gate_; }
  const std::vector<Tensor>& up_w() const { return up_; }
  const std::vector<Tensor>& down_w() const { return down_; }

 private:
  const Tensor& pick(const std::vector<Tensor>& bank, std::size_t e) const {
    return bank.size() == 1 ? bank.front() : bank[e];
  }

  std::size_t d_model_;
  std::size_t d_ff_;
  MoeConfig config_;
  Tensor router_;  // [d_model, N]
  std::vector<Tensor> gate_, up_, down_;
};

}  // namespace paramaug::layers
