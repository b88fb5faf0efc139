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
#include <vector>

#include "paramaug/layers/ghost.hpp"
#include "paramaug/models/descriptor.hpp"

namespace paramaug::models {

class GhostBottleneck : public layers::Module {
 public:
  GhostBottleneck(const CnnDescriptor& desc, const BlockDesc& block,
                  std::size_t c_in, std::size_t index, Rng& rng);

  void collect_parameters(const std::string& prefix,
                          std::vector<layers::NamedTensor>& out) const override;

 protected:
  Tensor forward_traced(const Tensor& x, layers::ForwardTrace* trace) const override;

 private:
  std::unique_ptr<layers::GhostModule> expand_;
  std::unique_ptr<layers::Module> downsample_;  // null when stride is 1
  std::unique_ptr<layers::GhostModule> project_;
  std::unique_ptr<layers::Module> shortcut_;  // null for identity
};

/// Stem conv -> ghost bottleneck stages -> 1x1 head conv -> global average
/// pool -> linear classifier. Every conv carries a bias; there is no batch
/// normalisation.
class CnnModel : public layers::Module {
 public:
  /// Validates the descriptor first.
  CnnModel(const CnnDescriptor& desc, Rng& rng);

  const CnnDescriptor& descriptor() const { return desc_; }
  std::size_t block_count() const { return blocks_.size(); }
  const GhostBottleneck& block(std::size_t i) const { return *blocks_.at(i); }

  void collect_parameters(const std::string& prefix,
                          std::vector<layers::NamedTensor>& out) const override;

 protected:
  /// x [B, in_channels, H, W] -> logits [B, num_classes].
  Tensor forward_traced(const Tensor& x, layers::ForwardTrace* trace) const override;

 private:
  CnnDescriptor desc_;
  std::unique_ptr<layers::Module> stem_;
  std::vector<std::unique_ptr<GhostBottleneck>> blocks_;
  std::vector<std::string> block_names_;
  std::unique_ptr<layers::Module> head_;
  Tensor fc_w_;  // [head_channels, num_classes]
  Tensor fc_b_;
};

}  // namespace paramaug::models
