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

#include "paramaug/train/data.hpp"

#include <algorithm>
#include <cmath>

#include "paramaug/error.hpp"
#include "paramaug/rng.hpp"

namespace paramaug::train {

Tensor BlobDataset::batch(std::span<const std::size_t> rows) const {
  const std::size_t n = sample_numel();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (std::size_t r : rows) {
    if (r >= labels.size()) throw ContractError("blobs: row out of range");
    out.insert(out.end(), images.begin() + static_cast<std::ptrdiff_t>(r * n),
               images.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  return Tensor(Shape{rows.size(), spec.channels, spec.height, spec.width}, std::move(out));
}

BlobDataset make_blobs(const BlobSpec& spec) {
  BlobDataset d{spec, {}, {}};
  const Rng root(spec.seed);
  // Class means: a random direction per class, scaled to `separation`.
  Rng mean_rng = root.split(0);
  std::vector<double> means(spec.num_classes * spec.channels);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    double norm = 0.0;
    for (std::size_t c = 0; c < spec.channels; ++c) {
      means[k * spec.channels + c] = mean_rng.normal();
      norm += means[k * spec.channels + c] * means[k * spec.channels + c];
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < spec.channels; ++c)
      means[k * spec.channels + c] *= spec.separation / (norm > 0.0 ? norm : 1.0);
  }
  const std::size_t hw = spec.height * spec.width;
  d.images.resize(spec.size * spec.channels * hw);
  d.labels.resize(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    Rng rng = root.split(1 + i);
    const std::size_t label = rng.uniform_int(spec.num_classes);
    d.labels[i] = label;
    double* img = d.images.data() + i * spec.channels * hw;
    for (std::size_t c = 0; c < spec.channels; ++c)
      for (std::size_t p = 0; p < hw; ++p)
        img[c * hw + p] = means[label * spec.channels + c] + spec.noise * rng.normal();
  }
  return d;
}

std::size_t TokenStream::windows() const {
  return tokens.size() < 2 ? 0 : (tokens.size() - 1) / spec.seq_len;
}

std::span<const std::size_t> TokenStream::window(std::size_t w) const {
  if (w >= windows()) throw ContractError("token stream: window out of range");
  return std::span<const std::size_t>(tokens).subspan(w * spec.seq_len, spec.seq_len + 1);
}

TokenStream make_grammar(const GrammarSpec& spec) {
  TokenStream s{spec, {}};
  const Rng root(spec.seed);
  // Successor table: row s lists `branching` distinct symbols in [1, vocab).
  std::vector<std::vector<std::size_t>> next(spec.vocab);
  std::vector<double> weights(spec.branching);
  double total = 0.0;
  for (std::size_t r = 0; r < spec.branching; ++r) total += weights[r] = 1.0 / double(r + 1);
  for (std::size_t sym = 1; sym < spec.vocab; ++sym) {
    Rng rng = root.split(sym);
    std::vector<std::size_t> pool(spec.vocab - 1);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
    rng.shuffle(pool);
    next[sym].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.branching));
  }
  Rng walk = root.split(0);
  s.tokens.reserve(spec.tokens);
  std::size_t cur = 0;
  while (s.tokens.size() < spec.tokens) {
    if (cur == 0) {
      cur = 1 + walk.uniform_int(spec.vocab - 1);
    } else if (walk.uniform_int(8) == 0) {
      cur = 0;
    } else {
      double u = walk.uniform() * total;
      std::size_t r = 0;
      while (r + 1 < spec.branching && u >= weights[r]) u -= weights[r++];
      cur = next[cur][r];
    }
    s.tokens.push_back(cur);
  }
  return s;
}

}  // namespace paramaug::train
