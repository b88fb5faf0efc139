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

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

#include "paramaug/models/descriptor.hpp"

namespace paramaug::complexity {

using Count = std::int64_t;
using Rational = boost::rational<Count>;

enum class LayerKind {
  Conv,
  DynamicConv,
  Linear,
  Embedding,
  Norm,
  Attention,
  Ffn,
  MoeFfn,
  Router,
};

std::string_view to_string(LayerKind kind);

/// One multiply-accumulate counts as `mac_factor` FLOPs. The default of 1
/// matches the convolution formulas used throughout; 2 is the common
/// alternative in other literature.
struct FlopConvention {
  int mac_factor = 1;
  static FlopConvention parse(std::string_view s);  // "mac=1" | "mac=2"
  std::string str() const { return "mac=" + std::to_string(mac_factor); }
};

/// Geometry kept alongside a conv cost so ratio regimes can be evaluated.
struct ConvShape {
  Count c_in = 0, c_out = 0, k = 0, groups = 1, m = 0, out_area = 0;
};

struct LayerCost {
  std::string layer;
  LayerKind kind = LayerKind::Conv;
  Count params_weights = 0;
  /// Biases, router biases and norm gains: kept apart so the bias-free
  /// closed forms stay reproducible digit for digit.
  Count params_biases = 0;
  Count flops = 0;
  Count flops_biases = 0;
  std::string notes;
  std::optional<ConvShape> conv;

  Count params() const { return params_weights + params_biases; }
};

/// Standard conv: C_out*(C_in/g)*K^2 weights, H'W' times that in FLOPs.
LayerCost count_conv(const layers::ConvSpec& spec, std::size_t out_h,
                     std::size_t out_w, std::string name = "conv");

/// Dynamic conv with an m-expert bank and a C_in-wide router MLP:
///   params = C_in^2 + C_in*m + m*C_out*(C_in/g)*K^2
///   flops  = params + H'W'*C_out*(C_in/g)*K^2
/// Bias terms go to params_biases / flops_biases.
LayerCost count_dynamic_conv(const layers::ConvSpec& spec, std::size_t m,
                             std::size_t out_h, std::size_t out_w,
                             std::string name = "dynamic_conv");

/// "M << C_out K^2" is read as 50 M <= C_out K^2. With C_in = C_out the
/// exact ratio exceeds 1/K^2 + M by M / (C_out K^2), a relative error below
/// 1 / (C_out K^2), so this factor bounds it under 2%.
inline constexpr Count kParamRegimeFactor = 50;
/// "M << H'W'" is read as 20 M <= H'W': the leading excess term of the
/// FLOPs ratio, about M / H'W', stays at or below 5%.
inline constexpr Count kFlopsRegimeFactor = 20;

struct Ratios {
  Rational r_param;
  Rational r_flops;
  double r_param_approx = 0.0;  // 1/K^2 + M
  double r_flops_approx = 1.0;
  bool m_much_less_than_ckk = false;
  bool channels_balanced = false;
  bool m_above_one = false;
  bool m_much_less_than_hw = false;

  /// Regime of the 1/K^2 + M approximation.
  bool param_regime() const { return m_much_less_than_ckk && channels_balanced; }
  /// Regime of the "about 1" FLOPs approximation (1 < M << H'W').
  bool flops_regime() const { return m_above_one && m_much_less_than_hw; }
};

/// Exact dynamic/standard ratios over bias-free counts. `dynamic` must carry
/// its ConvShape. Throws ContractError on zero denominators.
Ratios ratios(const LayerCost& standard, const LayerCost& dynamic);

double to_double(const Rational& r);

struct ComplexityReport {
  std::string model;
  FlopConvention convention;
  std::vector<LayerCost> per_layer;
  Count total_params = 0;
  Count total_params_biases = 0;
  Count total_flops = 0;
  Count total_flops_biases = 0;
  /// Transformers: matmul MACs (times mac_factor) for one token.
  std::optional<Count> flops_per_token;
  std::optional<Ratios> ratios;
  /// Same architecture with every dynamic conv made standard.
  std::optional<Count> baseline_params;
  std::optional<Count> baseline_flops;

  void add(LayerCost cost);
};

ComplexityReport count_conv_descriptor(const models::ConvDescriptor& desc,
                                       FlopConvention convention = {});

/// Per conv site of the layout plus the classifier. ReLU, pooling and
/// residual additions are not counted.
ComplexityReport count_cnn(const models::CnnDescriptor& desc,
                           FlopConvention convention = {});

struct SequenceOptions {
  std::size_t prompt_len = 1024;
  std::size_t response_len = 1;
  /// Tokens run through the model: the prompt plus all but the last
  /// generated token.
  std::size_t tokens() const { return prompt_len + response_len - 1; }
};

/// Embedding, per-layer attention (4 d^2 projections plus causal score and
/// value products), SwiGLU/MoE FFN, router, norms, final norm and untied
/// head. FLOPs cover one forward pass over `seq.tokens()` tokens.
ComplexityReport count_transformer(const models::LlamaDescriptor& desc,
                                   SequenceOptions seq = {},
                                   FlopConvention convention = {});

ComplexityReport count(const models::Descriptor& desc, FlopConvention convention = {},
                       SequenceOptions seq = {});

nlohmann::json to_json(const LayerCost& cost);
nlohmann::json to_json(const Ratios& r);
nlohmann::json to_json(const ComplexityReport& report);

/// Columns: layer,kind,params_weights,params_biases,flops,notes. A final
/// "total" row carries the sums.
std::string to_csv(const ComplexityReport& report);

/// Human-readable table of the same document.
std::string to_text(const ComplexityReport& report);

}  // namespace paramaug::complexity
