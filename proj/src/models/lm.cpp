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

#include "paramaug/models/lm.hpp"

#include <cmath>

namespace paramaug::models {

namespace {

Tensor projection(std::size_t in, std::size_t out, Rng& rng) {
  return layers::lecun_uniform(Shape{in, out}, in, rng);
}

Tensor causal_attention(const Tensor& h, const Tensor& wq, const Tensor& wk,
                        const Tensor& wv, const Tensor& wo, std::size_t heads) {
  const std::size_t d = h.dim(1), hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor q = matmul(h, wq), k = matmul(h, wk), v = matmul(h, wv);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    Tensor qh = slice(q, 1, i * hd, hd);
    Tensor kh = slice(k, 1, i * hd, hd);
    Tensor vh = slice(v, 1, i * hd, hd);
    Tensor scores = causal_mask(scale(matmul(qh, transpose(kh)), inv_sqrt));
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  return matmul(heads == 1 ? outs[0] : concat(outs, 1), wo);
}

}  // namespace

LlamaModel::LlamaModel(const LlamaDescriptor& desc, Rng& rng) : desc_(desc) {
  desc_.validate();
  const std::size_t d = desc_.d_model;
  embed_ = Tensor::normal(Shape{desc_.vocab_size, d}, rng, 1.0, true);
  for (std::size_t i = 0; i < desc_.n_layers; ++i) {
    Block b;
    b.attn_norm = Tensor::ones(Shape{d}, true);
    b.wq = projection(d, d, rng);
    b.wk = projection(d, d, rng);
    b.wv = projection(d, d, rng);
    b.wo = projection(d, d, rng);
    b.ffn_norm = Tensor::ones(Shape{d}, true);
    if (desc_.moe) {
      b.moe = std::make_unique<layers::MoeFfn>(d, desc_.d_ff, desc_.moe->config(), rng);
    } else {
      b.ffn = std::make_unique<layers::SwiGluFfn>(d, desc_.d_ff, rng);
    }
    blocks_.push_back(std::move(b));
  }
  final_norm_ = Tensor::ones(Shape{d}, true);
  head_ = projection(d, desc_.vocab_size, rng);
}

LmOutput LlamaModel::forward(std::span<const std::size_t> tokens) const {
  if (tokens.empty()) throw ContractError("lm: empty token sequence");
  if (tokens.size() > desc_.max_seq_len) {
    throw ContractError("lm: sequence of " + std::to_string(tokens.size()) +
                        " tokens exceeds max_seq_len " + std::to_string(desc_.max_seq_len));
  }
  for (std::size_t t : tokens) {
    if (t >= desc_.vocab_size) {
      throw ContractError("lm: token id " + std::to_string(t) + " outside vocabulary of " +
                          std::to_string(desc_.vocab_size));
    }
  }
  LmOutput out;
  Tensor x = index_select(embed_, tokens);
  std::optional<Tensor> aux;
  for (const Block& b : blocks_) {
    x = add(x, causal_attention(rms_norm(x, b.attn_norm), b.wq, b.wk, b.wv, b.wo,
                                desc_.n_heads));
    Tensor h = rms_norm(x, b.ffn_norm);
    if (b.moe) {
      layers::MoeOutput m = b.moe->forward(h);
      x = add(x, m.y);
      aux = aux ? add(*aux, m.aux_loss) : m.aux_loss;
      out.routing.push_back(std::move(m.stats));
    } else {
      x = add(x, b.ffn->forward(h));
    }
  }
  out.logits = matmul(rms_norm(x, final_norm_), head_);
  out.aux_loss = aux ? scale(*aux, 1.0 / static_cast<double>(blocks_.size()))
                     : Tensor::scalar(0.0);
  return out;
}

void LlamaModel::collect_parameters(const std::string& prefix,
                                    std::vector<layers::NamedTensor>& out) const {
  out.push_back({prefix + "embed", embed_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    const std::string p = prefix + "layers." + std::to_string(i) + ".";
    out.push_back({p + "attn_norm", b.attn_norm});
    out.push_back({p + "attn.wq", b.wq});
    out.push_back({p + "attn.wk", b.wk});
    out.push_back({p + "attn.wv", b.wv});
    out.push_back({p + "attn.wo", b.wo});
    out.push_back({p + "ffn_norm", b.ffn_norm});
    if (b.moe) {
      b.moe->collect_parameters(p + "ffn.", out);
    } else {
      b.ffn->collect_parameters(p + "ffn.", out);
    }
  }
  out.push_back({prefix + "final_norm", final_norm_});
  out.push_back({prefix + "lm_head", head_});
}

std::vector<layers::NamedTensor> LlamaModel::parameters() const {
  std::vector<layers::NamedTensor> out;
  collect_parameters("", out);
  return out;
}

std::size_t LlamaModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

}  // namespace paramaug::models
