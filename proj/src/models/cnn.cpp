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

#include "paramaug/models/cnn.hpp"

#include "paramaug/layers/ffn.hpp"

namespace paramaug::models {

using layers::ConvSpec;

GhostBottleneck::GhostBottleneck(const CnnDescriptor& desc, const BlockDesc& block,
                                 std::size_t c_in, std::size_t index, Rng& rng) {
  const std::size_t hidden = hidden_channels(block, c_in);
  expand_ = std::make_unique<layers::GhostModule>(
      c_in, hidden, true, rng, dynamic_m(desc, ConvRole::Expand, index));
  if (block.stride > 1) {
    downsample_ = layers::make_conv(
        ConvSpec{hidden, hidden, block.kernel, block.stride, block.kernel / 2, hidden, true},
        dynamic_m(desc, ConvRole::Downsample, index), rng);
  }
  project_ = std::make_unique<layers::GhostModule>(
      hidden, block.c_out, false, rng, dynamic_m(desc, ConvRole::Project, index));
  if (block.stride > 1 || c_in != block.c_out) {
    shortcut_ = layers::make_conv(ConvSpec{c_in, block.c_out, 1, block.stride, 0, 1, true},
                                  dynamic_m(desc, ConvRole::Shortcut, index), rng);
  }
}

Tensor GhostBottleneck::forward_traced(const Tensor& x,
                                       layers::ForwardTrace* trace) const {
  Tensor y = expand_->forward(x, trace);
  if (downsample_) y = downsample_->forward(y, trace);
  y = project_->forward(y, trace);
  return add(y, shortcut_ ? shortcut_->forward(x, trace) : x);
}

void GhostBottleneck::collect_parameters(const std::string& prefix,
                                         std::vector<layers::NamedTensor>& out) const {
  expand_->collect_parameters(prefix + "expand.", out);
  if (downsample_) downsample_->collect_parameters(prefix + "downsample.", out);
  project_->collect_parameters(prefix + "project.", out);
  if (shortcut_) shortcut_->collect_parameters(prefix + "shortcut.", out);
}

namespace {

// Every block draws from its own stream so that changing one block leaves
// the initial values of all others untouched.
constexpr std::uint64_t kStemStream = 0;
constexpr std::uint64_t kHeadStream = 1ULL << 32;
constexpr std::uint64_t kClassifierStream = kHeadStream + 1;

}  // namespace

CnnModel::CnnModel(const CnnDescriptor& desc, Rng& rng) : desc_(desc) {
  desc_.validate();
  const StemDesc& st = desc_.stem;
  Rng stem_rng = rng.split(kStemStream);
  stem_ = layers::make_conv(
      ConvSpec{desc_.in_channels, st.c_out, st.kernel, st.stride, st.kernel / 2, 1, true},
      dynamic_m(desc_, ConvRole::Stem, std::nullopt), stem_rng);
  std::size_t c = st.c_out, index = 0;
  for (std::size_t s = 0; s < desc_.stages.size(); ++s) {
    for (std::size_t b = 0; b < desc_.stages[s].size(); ++b, ++index) {
      const BlockDesc& blk = desc_.stages[s][b];
      Rng block_rng = rng.split(1 + index);
      blocks_.push_back(std::make_unique<GhostBottleneck>(desc_, blk, c, index, block_rng));
      block_names_.push_back("stages." + std::to_string(s) + "." + std::to_string(b) + ".");
      c = blk.c_out;
    }
  }
  Rng head_rng = rng.split(kHeadStream);
  head_ = layers::make_conv(ConvSpec{c, desc_.head_channels, 1, 1, 0, 1, true},
                            dynamic_m(desc_, ConvRole::Head, std::nullopt), head_rng);
  Rng fc_rng = rng.split(kClassifierStream);
  fc_w_ = layers::lecun_uniform(Shape{desc_.head_channels, desc_.num_classes},
                                desc_.head_channels, fc_rng);
  fc_b_ = Tensor::zeros(Shape{desc_.num_classes}, true);
}

Tensor CnnModel::forward_traced(const Tensor& x, layers::ForwardTrace* trace) const {
  if (x.rank() != 4 || x.dim(1) != desc_.in_channels) {
    throw ShapeError("cnn: expected input [B," + std::to_string(desc_.in_channels) +
                         ",H,W], got " + x.shape().str(),
                     x.rank() == 4 ? 1 : -1);
  }
  Tensor y = relu(stem_->forward(x, trace));
  for (const auto& block : blocks_) y = block->forward(y, trace);
  y = relu(head_->forward(y, trace));
  return linear(global_avg_pool(y), fc_w_, fc_b_);
}

void CnnModel::collect_parameters(const std::string& prefix,
                                  std::vector<layers::NamedTensor>& out) const {
  stem_->collect_parameters(prefix + "stem.", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i]->collect_parameters(prefix + block_names_[i], out);
  head_->collect_parameters(prefix + "head.", out);
  out.push_back({prefix + "classifier.weight", fc_w_});
  out.push_back({prefix + "classifier.bias", fc_b_});
}

}  // namespace paramaug::models
