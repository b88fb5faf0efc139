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
#include <span>
#include <vector>

#include "paramaug/tensor.hpp"

namespace paramaug {

// Elementwise. `b` must have the shape of `a` or of a trailing suffix of it
// (broadcast over the leading axes, e.g. a bias row added to every row).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// z * sigmoid(z)
Tensor silu(const Tensor& a);

/// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [n,k] * w [k,m] + b [m]
Tensor linear(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& b = std::nullopt);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reduces `axis` away.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor softmax(const Tensor& a, std::size_t axis);
/// [T,T] scores; entries above the diagonal become -inf.
Tensor causal_mask(const Tensor& scores);

/// [B,C,H,W] -> [B,C]
Tensor global_avg_pool(const Tensor& x);

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Rows of `a` (axis 0) in the given order; repeats allowed.
Tensor index_select(const Tensor& a, std::span<const std::size_t> rows);
/// Zero tensor with `n` rows; row rows[j] receives src row j (summed on
/// repeats).
Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows,
                    std::size_t n);
/// out[j] = a[rows[j], cols[j]] for a rank-2 `a`.
Tensor gather(const Tensor& a, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols);
/// out[i, ...] = a[i, ...] * s[i]
Tensor scale_rows(const Tensor& a, const Tensor& s);

/// Row-wise x / sqrt(mean(x^2) + eps) * weight, x [n,d], weight [d].
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps = 1e-6);

/// Mean over rows of -sum_c q_c log softmax(logits)_c with
/// q = (1 - eps) * onehot(target) + eps / C.
Tensor cross_entropy(const Tensor& logits,
                     std::span<const std::size_t> targets,
                     double label_smoothing = 0.0);

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Output extent along one spatial axis; throws GeometryError when < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t k,
                               std::size_t stride, std::size_t padding);

/// Cross-correlation. x [B,C_in,H,W], w [C_out,C_in/groups,K,K],
/// bias [C_out].
Tensor conv2d(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& bias, ConvGeometry geometry);
Tensor conv2d(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& bias = std::nullopt,
              std::size_t stride = 1, std::size_t padding = 0);
Tensor grouped_conv2d(const Tensor& x, const Tensor& w, std::size_t groups,
                      const std::optional<Tensor>& bias = std::nullopt,
                      std::size_t stride = 1, std::size_t padding = 0);

/// Sample b is convolved with its own kernel w[b] ([B,C_out,C_in/g,K,K]) and
/// bias[b] ([B,C_out]).
Tensor conv2d_per_sample(const Tensor& x, const Tensor& w,
                         const std::optional<Tensor>& bias,
                         ConvGeometry geometry);

/// out[b] = sum_i coeffs[b,i] * experts[i]; coeffs [B,M], experts all of one
/// shape S, result [B, S...].
Tensor mix(const Tensor& coeffs, const std::vector<Tensor>& experts);

}  // namespace paramaug
