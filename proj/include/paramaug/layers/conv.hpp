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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paramaug/layers/module.hpp"
#include "paramaug/ops.hpp"
#include "paramaug/rng.hpp"

namespace paramaug::layers {

struct ConvSpec {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool has_bias = false;

  /// Throws ValidationError unless all extents are positive and the channel
  /// counts divide by `groups`.
  void validate() const;

  Shape weight_shape() const { return Shape{c_out, c_in / groups, k, k}; }
  std::size_t weight_size() const { return c_out * (c_in / groups) * k * k; }
  ConvGeometry geometry() const { return ConvGeometry{stride, padding, groups}; }
  std::size_t out_extent(std::size_t in) const {
    return conv_output_extent(in, k, stride, padding);
  }

  bool operator==(const ConvSpec&) const = default;
};

/// Uniform(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

/// Standard convolution layer.
class Conv2dLayer : public Module {
 public:
  Conv2dLayer(const ConvSpec& spec, Rng& rng);

  const ConvSpec& spec() const { return spec_; }
  const Tensor& weight() const { return weight_; }
  const std::optional<Tensor>& bias() const { return bias_; }

  void collect_parameters(const std::string& prefix,
                          std::vector<NamedTensor>& out) const override;

 protected:
  Tensor forward_traced(const Tensor& x, ForwardTrace* trace) const override;

 private:
  ConvSpec spec_;
  Tensor weight_;
  std::optional<Tensor> bias_;
};

/// Two-layer coefficient generator: pooled [B,C_in] -> ReLU(. w1 + b1) w2 + b2
/// -> softmax over M. Hidden width is C_in.
struct RouterMlp {
  Tensor w1;  // [C_in, C_in]
  Tensor b1;  // [C_in]
  Tensor w2;  // [C_in, M]
  Tensor b2;  // [M]

  /// w1 Kaiming-uniform, b1 zero, w2 and b2 zero so initial coefficients are
  /// uniform.
  static RouterMlp init(std::size_t c_in, std::size_t m, Rng& rng);

  /// [B,C_in] pooled features -> [B,M] coefficients.
  Tensor coefficients(const Tensor& pooled) const;
};

/// Convolution whose kernel is a per-sample softmax mixture of M expert
/// kernels, with mixing weights predicted from the pooled input.
class DynamicConv2d : public Module {
 public:
  DynamicConv2d(const ConvSpec& spec, std::size_t m, Rng& rng);

  const ConvSpec& spec() const { return spec_; }
  std::size_t experts() const { return experts_.size(); }
  const std::vector<Tensor>& expert_weights() const { return experts_; }
  const std::vector<Tensor>& expert_biases() const { return expert_biases_; }
  const RouterMlp& router() const { return router_; }

  /// Mixing coefficients [B,M] for input x.
  Tensor coefficients(const Tensor& x) const;

  void collect_parameters(const std::string& prefix,
                          std::vector<NamedTensor>& out) const override;

 protected:
  Tensor forward_traced(const Tensor& x, ForwardTrace* trace) const override;

 private:
  ConvSpec spec_;
  std::vector<Tensor> experts_;
  std::vector<Tensor> expert_biases_;  // empty unless spec.has_bias
  RouterMlp router_;
};

enum class RepMode { Train, Folded };

/// Multi-branch training-time convolution, foldable into one kernel.
class RepConv2d : public Module {
 public:
  /// `scales` defaults to all ones.
  RepConv2d(const ConvSpec& spec, std::size_t branches, Rng& rng,
            std::vector<double> scales = {});

  const ConvSpec& spec() const { return spec_; }
  const std::vector<Tensor>& branches() const { return branches_; }
  const std::vector<Tensor>& branch_biases() const { return branch_biases_; }
  const std::vector<double>& scales() const { return scales_; }
  bool folded() const { return folded_weight_.has_value(); }
  const std::optional<Tensor>& folded_weight() const { return folded_weight_; }
  const std::optional<Tensor>& folded_bias() const { return folded_bias_; }

  /// folded = sum_b scale_b * W_b (likewise for biases).
  void fold();

  /// Train: sum_b scale_b * conv(x, W_b). Folded: conv(x, folded); throws
  /// StateError if fold() has not been called.
  Tensor forward(const Tensor& x, RepMode mode) const;
  using Module::forward;

  /// Element count of the folded kernel (and bias); what inference keeps.
  std::size_t inference_parameter_count() const;

  void collect_parameters(const std::string& prefix,
                          std::vector<NamedTensor>& out) const override;

 protected:
  Tensor forward_traced(const Tensor& x, ForwardTrace* trace) const override;

 private:
  ConvSpec spec_;
  std::vector<Tensor> branches_;
  std::vector<Tensor> branch_biases_;
  std::vector<double> scales_;
  std::optional<Tensor> folded_weight_;
  std::optional<Tensor> folded_bias_;
};

/// Static conv when `dynamic_m` is 0, otherwise a DynamicConv2d with that
/// many experts.
std::unique_ptr<Module> make_conv(const ConvSpec& spec, std::size_t dynamic_m,
                                  Rng& rng);

}  // namespace paramaug::layers
