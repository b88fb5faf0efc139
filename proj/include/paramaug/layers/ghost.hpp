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

#include <memory>

#include "paramaug/layers/conv.hpp"

namespace paramaug::layers {

/// Half of the output channels come from a pointwise "primary" conv, the
/// other half from a 3x3 depthwise conv applied to the primary output.
class GhostModule : public Module {
 public:
  /// c_out must be even. `primary_m` > 0 makes the primary conv dynamic.
  GhostModule(std::size_t c_in, std::size_t c_out, bool relu, Rng& rng,
              std::size_t primary_m = 0, bool has_bias = true);

  static ConvSpec primary_spec(std::size_t c_in, std::size_t c_out,
                               bool has_bias);
  static ConvSpec cheap_spec(std::size_t c_out, bool has_bias);

  const Module& primary() const { return *primary_; }
  const Conv2dLayer& cheap() const { return *cheap_; }
  bool relu() const { return relu_; }
  std::size_t out_channels() const { return 2 * cheap_->spec().c_out; }

  void collect_parameters(const std::string& prefix,
                          std::vector<NamedTensor>& out) const override;

 protected:
  Tensor forward_traced(const Tensor& x, ForwardTrace* trace) const override;

 private:
  std::unique_ptr<Module> primary_;
  std::unique_ptr<Conv2dLayer> cheap_;
  bool relu_;
};

}  // namespace paramaug::layers
