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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "paramaug/layers/conv.hpp"
#include "paramaug/layers/ffn.hpp"

namespace paramaug::models {

using json = nlohmann::json;

/// Where a convolution sits inside the CNN. `Cheap` (the ghost depthwise
/// half) is never made dynamic.
enum class ConvRole { Stem, Expand, Cheap, Downsample, Project, Shortcut, Head };

std::string_view to_string(ConvRole role);
ConvRole parse_conv_role(std::string_view s);

struct StemDesc {
  std::size_t c_out = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

/// Ghost bottleneck: expand ghost (relu) -> [depthwise k x k, stride] ->
/// project ghost, plus an identity or strided 1x1 shortcut.
struct BlockDesc {
  double expansion = 2.0;
  std::size_t c_out = 16;
  std::size_t stride = 1;
  std::size_t kernel = 3;
  /// Optional declared input width; must match the previous block's c_out.
  std::optional<std::size_t> c_in;
};

struct DynamicDesc {
  std::size_t m = 4;
  std::set<ConvRole> roles{ConvRole::Expand};
  /// Flattened block indices to replace in; empty selects every block.
  /// Stem and head roles ignore this filter.
  std::vector<std::size_t> blocks;
};

struct CnnDescriptor {
  std::size_t in_channels = 3;
  std::size_t input_h = 32;
  std::size_t input_w = 32;
  StemDesc stem;
  std::vector<std::vector<BlockDesc>> stages;
  std::size_t head_channels = 64;
  std::size_t num_classes = 10;
  std::optional<DynamicDesc> dynamic;

  /// Throws ValidationError naming the offending field, e.g.
  /// "stages[1][0].expansion".
  void validate() const;
  std::size_t block_count() const;
};

/// One convolution of a built CNN, in construction order.
struct ConvSite {
  std::string name;  // parameter prefix, e.g. "stages.0.1.expand.primary"
  ConvRole role;
  layers::ConvSpec spec;
  std::size_t dynamic_m = 0;  // 0 for a standard conv
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::optional<std::size_t> block;
};

struct CnnLayout {
  std::vector<ConvSite> convs;
  std::size_t classifier_in = 0;
  std::size_t num_classes = 0;
};

/// Hidden width of a block with input width c_in.
std::size_t hidden_channels(const BlockDesc& block, std::size_t c_in);

/// Expert count for a conv of the given role (0: standard conv).
std::size_t dynamic_m(const CnnDescriptor& desc, ConvRole role,
                      std::optional<std::size_t> block);

CnnLayout layout(const CnnDescriptor& desc);

struct MoeDesc {
  std::size_t n_experts = 4;
  layers::Placement placement = layers::Placement::UpProj;
  double capacity_factor = 1.25;
  double aux_loss_weight = 0.01;

  layers::MoeConfig config() const;
};

struct LlamaDescriptor {
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t vocab_size = 100;
  std::size_t max_seq_len = 64;
  std::optional<MoeDesc> moe;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

/// d=2048, d_ff=8191, 16 heads, 12 layers, vocab 32000.
LlamaDescriptor llama_1b(std::optional<MoeDesc> moe = std::nullopt);

/// A lone convolution analysed against its dynamic counterpart.
struct ConvDescriptor {
  layers::ConvSpec spec;
  std::size_t m = 4;
  std::size_t input_h = 16;
  std::size_t input_w = 16;

  void validate() const;
};

using Descriptor = std::variant<CnnDescriptor, LlamaDescriptor, ConvDescriptor>;

json to_json(const CnnDescriptor& desc);
json to_json(const LlamaDescriptor& desc);
json to_json(const ConvDescriptor& desc);
json to_json(const Descriptor& desc);

/// Dispatches on the "type" key ("cnn", "llama", "conv"). Unknown keys,
/// wrong types and invalid values throw ValidationError with a field path.
Descriptor descriptor_from_json(const json& j);
CnnDescriptor cnn_from_json(const json& j);
LlamaDescriptor llama_from_json(const json& j);

/// Parses JSON text; syntax errors become ValidationError carrying
/// "<source>:<line>:<column>".
json parse_json_text(const std::string& text, const std::string& source);
json read_json_file(const std::string& path);
Descriptor load_descriptor(const std::string& path);

}  // namespace paramaug::models
