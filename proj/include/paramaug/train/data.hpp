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
#include <span>
#include <vector>

#include "paramaug/tensor.hpp"
#include "paramaug/train/config.hpp"

namespace paramaug::train {

/// Labelled images [size, channels, height, width], row-major.
struct BlobDataset {
  BlobSpec spec;
  std::vector<double> images;
  std::vector<std::size_t> labels;

  std::size_t sample_numel() const { return spec.channels * spec.height * spec.width; }
  /// Stacks the selected samples into [rows.size(), C, H, W].
  Tensor batch(std::span<const std::size_t> rows) const;
};

/// Sample i is drawn from `Rng(seed).split(i)` alone, so generation order
/// does not matter and regeneration is bit-exact.
BlobDataset make_blobs(const BlobSpec& spec);

struct TokenStream {
  GrammarSpec spec;
  std::vector<std::size_t> tokens;

  /// Number of disjoint (seq_len + 1)-token windows.
  std::size_t windows() const;
  /// Window w: tokens[w*seq_len, (w+1)*seq_len].
  std::span<const std::size_t> window(std::size_t w) const;
};

/// Each symbol s > 0 owns `branching` successors (drawn from the stream
/// keyed by s) with Zipf-like weights 1/(rank+1); sentences start at a
/// uniformly drawn symbol and end with token 0 with probability 1/8 after
/// each symbol.
TokenStream make_grammar(const GrammarSpec& spec);

}  // namespace paramaug::train
