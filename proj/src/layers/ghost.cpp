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

#include "paramaug/layers/ghost.hpp"

namespace paramaug::layers {

ConvSpec GhostModule::primary_spec(std::size_t c_in, std::size_t c_out,
                                   bool has_bias) {
  return ConvSpec{c_in, c_out / 2, 1, 1, 0, 1, has_bias};
}

ConvSpec GhostModule::cheap_spec(std::size_t c_out, bool has_bias) {
  const std::size_t half = c_out / 2;
  return ConvSpec{half, half, 3, 1, 1, half, has_bias};
}

GhostModule::GhostModule(std::size_t c_in, std::size_t c_out, bool relu,
                         Rng& rng, std::size_t primary_m, bool has_bias)
    : relu_(relu) {
  if (c_out == 0 || c_out % 2 != 0) {
    throw ValidationError("c_out", "ghost module needs an even output width, got " +
                                       std::to_string(c_out));
  }
  primary_ = make_conv(primary_spec(c_in, c_out, has_bias), primary_m, rng);
  cheap_ = std::make_unique<Conv2dLayer>(cheap_spec(c_out, has_bias), rng);
}

Tensor GhostModule::forward_traced(const Tensor& x, ForwardTrace* trace) const {
  Tensor p = primary_->forward(x, trace);
  if (relu_) p = paramaug::relu(p);
  Tensor c = cheap_->forward(p, trace);
  if (relu_) c = paramaug::relu(c);
  return concat({p, c}, 1);
}

void GhostModule::collect_parameters(const std::string& prefix,
                                     std::vector<NamedTensor>& out) const {
  primary_->collect_parameters(prefix + "primary.", out);
  cheap_->collect_parameters(prefix + "cheap.", out);
}

}  // namespace paramaug::layers
