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

#include "paramaug/layers/conv.hpp"

#include <cmath>

namespace paramaug::layers {

namespace {

void require_channels(const Tensor& x, std::size_t c_in, const char* layer) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(layer) + ": input must be [B,C,H,W], got " +
                     x.shape().str());
  }
  if (x.dim(1) != c_in) {
    throw ShapeError(std::string(layer) + ": input has " +
                         std::to_string(x.dim(1)) + " channels, layer expects " +
                         std::to_string(c_in),
                     1);
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (c_in == 0) throw ValidationError("c_in", "must be positive");
  if (c_out == 0) throw ValidationError("c_out", "must be positive");
  if (k == 0) throw ValidationError("k", "must be positive");
  if (stride == 0) throw ValidationError("stride", "must be positive");
  if (groups == 0) throw ValidationError("groups", "must be positive");
  if (c_in % groups != 0) {
    throw ValidationError("c_in", std::to_string(c_in) +
                                      " not divisible by groups " +
                                      std::to_string(groups));
  }
  if (c_out % groups != 0) {
    throw ValidationError("c_out", std::to_string(c_out) +
                                       " not divisible by groups " +
                                       std::to_string(groups));
  }
}

Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor::uniform(shape, rng, -bound, bound, true);
}

Conv2dLayer::Conv2dLayer(const ConvSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  weight_ = kaiming_uniform(spec_.weight_shape(),
                            spec_.c_in / spec_.groups * spec_.k * spec_.k, rng);
  if (spec_.has_bias) bias_ = Tensor::zeros(Shape{spec_.c_out}, true);
}

Tensor Conv2dLayer::forward_traced(const Tensor& x, ForwardTrace*) const {
  require_channels(x, spec_.c_in, "conv2d layer");
  return conv2d(x, weight_, bias_, spec_.geometry());
}

void Conv2dLayer::collect_parameters(const std::string& prefix,
                                     std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "weight", weight_});
  if (bias_) out.push_back({prefix + "bias", *bias_});
}

RouterMlp RouterMlp::init(std::size_t c_in, std::size_t m, Rng& rng) {
  RouterMlp r;
  r.w1 = kaiming_uniform(Shape{c_in, c_in}, c_in, rng);
  r.b1 = Tensor::zeros(Shape{c_in}, true);
  r.w2 = Tensor::zeros(Shape{c_in, m}, true);
  r.b2 = Tensor::zeros(Shape{m}, true);
  return r;
}

Tensor RouterMlp::coefficients(const Tensor& pooled) const {
  Tensor hidden = relu(linear(pooled, w1, b1));
  return softmax(linear(hidden, w2, b2), 1);
}

DynamicConv2d::DynamicConv2d(const ConvSpec& spec, std::size_t m, Rng& rng)
    : spec_(spec) {
  spec_.validate();
  if (m == 0) throw ValidationError("m", "dynamic conv needs at least one expert");
  const std::size_t fan_in = spec_.c_in / spec_.groups * spec_.k * spec_.k;
  for (std::size_t i = 0; i < m; ++i) {
    experts_.push_back(kaiming_uniform(spec_.weight_shape(), fan_in, rng));
    if (spec_.has_bias)
      expert_biases_.push_back(Tensor::zeros(Shape{spec_.c_out}, true));
  }
  router_ = RouterMlp::init(spec_.c_in, m, rng);
}

Tensor DynamicConv2d::coefficients(const Tensor& x) const {
  require_channels(x, spec_.c_in, "dynamic conv");
  return router_.coefficients(global_avg_pool(x));
}

Tensor DynamicConv2d::forward_traced(const Tensor& x,
                                     ForwardTrace* trace) const {
  Tensor alpha = coefficients(x);
  if (trace) trace->coefficients.push_back(alpha);
  Tensor kernels = mix(alpha, experts_);
  std::optional<Tensor> biases;
  if (!expert_biases_.empty()) biases = mix(alpha, expert_biases_);
  return conv2d_per_sample(x, kernels, biases, spec_.geometry());
}

void DynamicConv2d::collect_parameters(const std::string& prefix,
                                       std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    out.push_back({prefix + "expert" + std::to_string(i) + ".weight",
                   experts_[i]});
    if (!expert_biases_.empty()) {
      out.push_back({prefix + "expert" + std::to_string(i) + ".bias",
                     expert_biases_[i]});
    }
  }
  out.push_back({prefix + "router.w1", router_.w1});
  out.push_back({prefix + "router.b1", router_.b1});
  out.push_back({prefix + "router.w2", router_.w2});
  out.push_back({prefix + "router.b2", router_.b2});
}

RepConv2d::RepConv2d(const ConvSpec& spec, std::size_t branches, Rng& rng,
                     std::vector<double> scales)
    : spec_(spec), scales_(std::move(scales)) {
  spec_.validate();
  if (branches == 0) throw ValidationError("branches", "need at least one branch");
  if (scales_.empty()) scales_.assign(branches, 1.0);
  if (scales_.size() != branches) {
    throw ValidationError("scales", std::to_string(scales_.size()) +
                                        " scales for " +
                                        std::to_string(branches) + " branches");
  }
  const std::size_t fan_in = spec_.c_in / spec_.groups * spec_.k * spec_.k;
  for (std::size_t b = 0; b < branches; ++b) {
    branches_.push_back(kaiming_uniform(spec_.weight_shape(), fan_in, rng));
    if (spec_.has_bias)
      branch_biases_.push_back(Tensor::zeros(Shape{spec_.c_out}, true));
  }
}

void RepConv2d::fold() {
  std::vector<double> w(spec_.weight_size(), 0.0);
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto src = branches_[b].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += scales_[b] * src[i];
  }
  folded_weight_ = Tensor(spec_.weight_shape(), std::move(w));
  if (!branch_biases_.empty()) {
    std::vector<double> bias(spec_.c_out, 0.0);
    for (std::size_t b = 0; b < branch_biases_.size(); ++b) {
      auto src = branch_biases_[b].data();
      for (std::size_t i = 0; i < bias.size(); ++i)
        bias[i] += scales_[b] * src[i];
    }
    folded_bias_ = Tensor(Shape{spec_.c_out}, std::move(bias));
  }
}

Tensor RepConv2d::forward(const Tensor& x, RepMode mode) const {
  require_channels(x, spec_.c_in, "rep conv");
  if (mode == RepMode::Folded) {
    if (!folded_weight_) {
      throw StateError("rep conv: folded forward before fold()");
    }
    return conv2d(x, *folded_weight_, folded_bias_, spec_.geometry());
  }
  std::optional<Tensor> acc;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    std::optional<Tensor> bias;
    if (!branch_biases_.empty()) bias = branch_biases_[b];
    Tensor y = scale(conv2d(x, branches_[b], bias, spec_.geometry()), scales_[b]);
    acc = acc ? add(*acc, y) : y;
  }
  return *acc;
}

Tensor RepConv2d::forward_traced(const Tensor& x, ForwardTrace*) const {
  return forward(x, RepMode::Train);
}

std::size_t RepConv2d::inference_parameter_count() const {
  if (!folded_weight_) {
    throw StateError("rep conv: inference parameters requested before fold()");
  }
  return folded_weight_->numel() + (folded_bias_ ? folded_bias_->numel() : 0);
}

void RepConv2d::collect_parameters(const std::string& prefix,
                                   std::vector<NamedTensor>& out) const {
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    out.push_back({prefix + "branch" + std::to_string(b) + ".weight",
                   branches_[b]});
    if (!branch_biases_.empty()) {
      out.push_back({prefix + "branch" + std::to_string(b) + ".bias",
                     branch_biases_[b]});
    }
  }
}

std::unique_ptr<Module> make_conv(const ConvSpec& spec, std::size_t dynamic_m,
                                  Rng& rng) {
  if (dynamic_m == 0) return std::make_unique<Conv2dLayer>(spec, rng);
  return std::make_unique<DynamicConv2d>(spec, dynamic_m, rng);
}

}  // namespace paramaug::layers
