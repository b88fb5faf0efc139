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
#include <string>
#include <vector>

#include "paramaug/tensor.hpp"

namespace paramaug::layers {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Per-call side outputs. Layers append; nothing is stored on the layer.
struct ForwardTrace {
  /// Softmax mixing coefficients [B,M] of every dynamic conv, in call order.
  std::vector<Tensor> coefficients;
};

/// A layer over image-like tensors [B,C,H,W].
class Module {
 public:
  virtual ~Module() = default;

  Tensor forward(const Tensor& x, ForwardTrace* trace = nullptr) const {
    return forward_traced(x, trace);
  }

  /// Appends trainable tensors as `prefix + local name`, in a fixed order.
  virtual void collect_parameters(const std::string& prefix,
                                  std::vector<NamedTensor>& out) const = 0;

  std::vector<NamedTensor> parameters(const std::string& prefix = "") const {
    std::vector<NamedTensor> out;
    collect_parameters(prefix, out);
    return out;
  }

  /// Enumerated trainable element count.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

 protected:
  virtual Tensor forward_traced(const Tensor& x, ForwardTrace* trace) const = 0;
};

}  // namespace paramaug::layers
