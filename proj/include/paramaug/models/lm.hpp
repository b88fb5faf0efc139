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
#include <span>
#include <vector>

#include "paramaug/layers/ffn.hpp"
#include "paramaug/models/descriptor.hpp"

namespace paramaug::models {

struct LmOutput {
  Tensor logits;    // [T, vocab]
  Tensor aux_loss;  // scalar: mean over layers; 0 for a dense model
  std::vector<layers::RoutingStats> routing;  // one per layer, MoE only
};

/// Decoder-only transformer: token embedding, pre-norm blocks of causal
/// multi-head attention and a SwiGLU (or top-1 MoE) FFN, final RMSNorm and
/// an untied output projection. No positional encoding; no linear biases.
class LlamaModel {
 public:
  LlamaModel(const LlamaDescriptor& desc, Rng& rng);

  const LlamaDescriptor& descriptor() const { return desc_; }

  /// One sequence of token ids, 1 <= T <= max_seq_len.
  LmOutput forward(std::span<const std::size_t> tokens) const;

  void collect_parameters(const std::string& prefix,
                          std::vector<layers::NamedTensor>& out) const;
  std::vector<layers::NamedTensor> parameters() const;
  std::size_t parameter_count() const;

 private:
  struct Block {
    Tensor attn_norm, wq, wk, wv, wo, ffn_norm;
    std::unique_ptr<layers::SwiGluFfn> ffn;
    std::unique_ptr<layers::MoeFfn> moe;
  };

  LlamaDescriptor desc_;
  Tensor embed_;  // [vocab, d]
  std::vector<Block> blocks_;
  Tensor final_norm_;
  Tensor head_;  // [d, vocab]
};

}  // namespace paramaug::models
