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

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "paramaug/ops.hpp"

namespace paramaug {

using detail::grad_buffer;
using detail::make_result;

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + s.str(),
                     static_cast<int>(axis));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) r.inner *= s[i];
  return r;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " + t.shape().str());
  }
}

// Checks that `b` matches a trailing suffix of `a`.
void require_broadcastable(const Tensor& a, const Tensor& b, const char* op) {
  const auto& da = a.shape().dims();
  const auto& db = b.shape().dims();
  if (db.size() > da.size()) {
    throw ShapeError(std::string(op) + ": cannot broadcast " +
                     b.shape().str() + " onto " + a.shape().str());
  }
  std::size_t offset = da.size() - db.size();
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (db[i] != da[offset + i]) {
      throw ShapeError(std::string(op) + ": shape " + b.shape().str() +
                           " does not match " + a.shape().str() + " on axis " +
                           std::to_string(offset + i),
                       static_cast<int>(offset + i));
    }
  }
}

template <typename Fwd, typename Dfn>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Dfn dfn) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return make_result(a.shape(), std::move(out), op, {a},
                     [a, dfn](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       auto x = a.data();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         ga[i] += g[i] * dfn(x[i]);
                       }
                     });
}

double sigmoid_value(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "add");
  const std::size_t m = b.numel();
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i % m];
  return make_result(a.shape(), std::move(out), "add", {a, b},
                     [a, b, m](std::span<const double> g) {
                       if (a.requires_grad()) {
                         auto ga = grad_buffer(a);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (b.requires_grad()) {
                         auto gb = grad_buffer(b);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] += g[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "sub");
  const std::size_t m = b.numel();
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i % m];
  return make_result(a.shape(), std::move(out), "sub", {a, b},
                     [a, b, m](std::span<const double> g) {
                       if (a.requires_grad()) {
                         auto ga = grad_buffer(a);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (b.requires_grad()) {
                         auto gb = grad_buffer(b);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] -= g[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "mul");
  const std::size_t m = b.numel();
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i % m];
  return make_result(a.shape(), std::move(out), "mul", {a, b},
                     [a, b, m](std::span<const double> g) {
                       auto x = a.data();
                       auto y = b.data();
                       if (a.requires_grad()) {
                         auto ga = grad_buffer(a);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i % m];
                       }
                       if (b.requires_grad()) {
                         auto gb = grad_buffer(b);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] += g[i] * x[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; },
               [s](double) { return s; });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
               [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", sigmoid_value, [](double x) {
    double s = sigmoid_value(x);
    return s * (1.0 - s);
  });
}

Tensor silu(const Tensor& a) {
  return unary(a, "silu", [](double x) { return x * sigmoid_value(x); },
               [](double x) {
                 double s = sigmoid_value(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + a.shape().str() +
                         " x " + b.shape().str(),
                     1);
  }
  std::vector<double> out(n * m, 0.0);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      const double* yrow = y.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += xv * yrow[j];
    }
  }
  return make_result(
      Shape{n, m}, std::move(out), "matmul", {a, b},
      [a, b, n, k, m](std::span<const double> g) {
        auto x = a.data();
        auto y = b.data();
        if (a.requires_grad()) {
          auto ga = grad_buffer(a);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* grow = g.data() + i * m;
              const double* yrow = y.data() + p * m;
              for (std::size_t j = 0; j < m; ++j) acc += grow[j] * yrow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (b.requires_grad()) {
          auto gb = grad_buffer(b);
          for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g.data() + i * m;
            for (std::size_t p = 0; p < k; ++p) {
              const double xv = x[i * k + p];
              double* gbrow = gb.data() + p * m;
              for (std::size_t j = 0; j < m; ++j) gbrow[j] += xv * grow[j];
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
  Tensor y = matmul(x, w);
  return b ? add(y, *b) : y;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(n * m);
  auto x = a.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = x[i * m + j];
  return make_result(Shape{m, n}, std::move(out), "transpose", {a},
                     [a, n, m](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < m; ++j)
                           ga[i * m + j] += g[j * n + i];
                     });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape.numel() != a.numel()) {
    throw ShapeError("reshape: " + a.shape().str() + " -> " + shape.str() +
                     " changes element count");
  }
  return make_result(shape, a.values(), "reshape", {a},
                     [a](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(Shape{}, {s}, "sum", {a}, [a](std::span<const double> g) {
    if (!a.requires_grad()) return;
    auto ga = grad_buffer(a);
    for (double& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(Shape{}, {s / n}, "mean", {a},
                     [a, n](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (double& v : ga) v += g[0] / n;
                     });
}

namespace {

Tensor reduce_axis(const Tensor& a, std::size_t axis, bool average,
                   const char* op) {
  AxisSplit sp = split_axis(a.shape(), axis, op);
  std::vector<std::size_t> dims = a.shape().dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
  const double factor = average ? 1.0 / static_cast<double>(sp.n) : 1.0;
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < sp.n; ++j)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += x[(o * sp.n + j) * sp.inner + i];
  if (average)
    for (double& v : out) v *= factor;
  return make_result(Shape(std::move(dims)), std::move(out), op, {a},
                     [a, sp, factor](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t j = 0; j < sp.n; ++j)
                           for (std::size_t i = 0; i < sp.inner; ++i)
                             ga[(o * sp.n + j) * sp.inner + i] +=
                                 factor * g[o * sp.inner + i];
                     });
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) {
  return reduce_axis(a, axis, false, "sum_axis");
}

Tensor mean(const Tensor& a, std::size_t axis) {
  return reduce_axis(a, axis, true, "mean_axis");
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  AxisSplit sp = split_axis(a.shape(), axis, "softmax");
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < sp.n; ++j)
        mx = std::max(mx, x[base + j * sp.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < sp.n; ++j) {
        double e = std::exp(x[base + j * sp.inner] - mx);
        out[base + j * sp.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < sp.n; ++j) out[base + j * sp.inner] /= z;
    }
  }
  Tensor result = make_result(a.shape(), out, "softmax", {a}, nullptr);
  if (!result.is_leaf()) {
    result.impl().node->backward = [a, sp, out = std::move(out)](
                                       std::span<const double> g) {
      if (!a.requires_grad()) return;
      auto ga = grad_buffer(a);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < sp.n; ++j) {
            const std::size_t k = base + j * sp.inner;
            dot += g[k] * out[k];
          }
          for (std::size_t j = 0; j < sp.n; ++j) {
            const std::size_t k = base + j * sp.inner;
            ga[k] += out[k] * (g[k] - dot);
          }
        }
      }
    };
  }
  return result;
}

Tensor causal_mask(const Tensor& scores) {
  require_rank(scores, 2, "causal_mask");
  const std::size_t t = scores.dim(0);
  if (scores.dim(1) != t) {
    throw ShapeError("causal_mask: scores must be square, got " +
                         scores.shape().str(),
                     1);
  }
  std::vector<double> out = scores.values();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j)
      out[i * t + j] = -std::numeric_limits<double>::infinity();
  return make_result(scores.shape(), std::move(out), "causal_mask", {scores},
                     [scores, t](std::span<const double> g) {
                       if (!scores.requires_grad()) return;
                       auto gs = grad_buffer(scores);
                       for (std::size_t i = 0; i < t; ++i)
                         for (std::size_t j = 0; j <= i; ++j)
                           gs[i * t + j] += g[i * t + j];
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t bc = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  return reshape(mean(reshape(x, Shape{bc, hw}), 1), Shape{x.dim(0), x.dim(1)});
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length) {
  AxisSplit sp = split_axis(a.shape(), axis, "slice");
  if (start + length > sp.n) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds extent " +
                         std::to_string(sp.n),
                     static_cast<int>(axis));
  }
  std::vector<std::size_t> dims = a.shape().dims();
  dims[axis] = length;
  std::vector<double> out(sp.outer * length * sp.inner);
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(
                                (o * sp.n + start) * sp.inner),
                length * sp.inner, out.begin() + o * length * sp.inner);
  return make_result(Shape(std::move(dims)), std::move(out), "slice", {a},
                     [a, sp, start, length](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t i = 0; i < length * sp.inner; ++i)
                           ga[(o * sp.n + start) * sp.inner + i] +=
                               g[o * length * sp.inner + i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  AxisSplit sp0 = split_axis(first, axis, "concat");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.rank()) {
      throw ShapeError("concat: rank mismatch, " + p.shape().str() + " vs " +
                       first.str());
    }
    for (std::size_t d = 0; d < first.rank(); ++d) {
      if (d != axis && p.dim(d) != first[d]) {
        throw ShapeError("concat: extent mismatch on axis " +
                             std::to_string(d),
                         static_cast<int>(d));
      }
    }
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  std::vector<std::size_t> dims = first.dims();
  dims[axis] = total;
  const std::size_t outer = sp0.outer, inner = sp0.inner;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].data();
    const std::size_t len = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * len), len,
                  out.begin() + (o * total + offset) * inner);
    offset += extents[k];
  }
  return make_result(
      Shape(std::move(dims)), std::move(out), "concat", parts,
      [parts, extents, outer, inner, total](std::span<const double> g) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          const std::size_t len = extents[k] * inner;
          if (parts[k].requires_grad()) {
            auto gp = grad_buffer(parts[k]);
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < len; ++i)
                gp[o * len + i] += g[(o * total + offset) * inner + i];
          }
          offset += extents[k];
        }
      });
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw ShapeError("index_select: scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t width = n == 0 ? 0 : a.numel() / n;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t r : idx) {
    if (r >= n) {
      throw ShapeError("index_select: row " + std::to_string(r) +
                           " out of range " + std::to_string(n),
                       0);
    }
  }
  std::vector<std::size_t> dims = a.shape().dims();
  dims[0] = idx.size();
  std::vector<double> out(idx.size() * width);
  auto x = a.data();
  for (std::size_t j = 0; j < idx.size(); ++j)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(idx[j] * width), width,
                out.begin() + j * width);
  return make_result(Shape(std::move(dims)), std::move(out), "index_select",
                     {a}, [a, idx, width](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (std::size_t j = 0; j < idx.size(); ++j)
                         for (std::size_t i = 0; i < width; ++i)
                           ga[idx[j] * width + i] += g[j * width + i];
                     });
}

Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows,
                    std::size_t n) {
  if (src.rank() == 0 || src.dim(0) != rows.size()) {
    throw ShapeError("scatter_rows: " + std::to_string(rows.size()) +
                         " row indices for source " + src.shape().str(),
                     0);
  }
  const std::size_t width = rows.empty() ? 0 : src.numel() / rows.size();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t r : idx) {
    if (r >= n) {
      throw ShapeError("scatter_rows: row " + std::to_string(r) +
                           " out of range " + std::to_string(n),
                       0);
    }
  }
  std::vector<std::size_t> dims = src.shape().dims();
  dims[0] = n;
  std::vector<double> out(n * width, 0.0);
  auto x = src.data();
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (std::size_t i = 0; i < width; ++i)
      out[idx[j] * width + i] += x[j * width + i];
  return make_result(Shape(std::move(dims)), std::move(out), "scatter_rows",
                     {src}, [src, idx, width](std::span<const double> g) {
                       if (!src.requires_grad()) return;
                       auto gs = grad_buffer(src);
                       for (std::size_t j = 0; j < idx.size(); ++j)
                         for (std::size_t i = 0; i < width; ++i)
                           gs[j * width + i] += g[idx[j] * width + i];
                     });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols) {
  require_rank(a, 2, "gather");
  if (rows.size() != cols.size()) {
    throw ShapeError("gather: row and column index counts differ");
  }
  const std::size_t n = a.dim(0), c = a.dim(1);
  std::vector<std::size_t> flat(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] >= n || cols[j] >= c) {
      throw ShapeError("gather: index out of range",
                       rows[j] >= n ? 0 : 1);
    }
    flat[j] = rows[j] * c + cols[j];
  }
  std::vector<double> out(flat.size());
  auto x = a.data();
  for (std::size_t j = 0; j < flat.size(); ++j) out[j] = x[flat[j]];
  return make_result(Shape{flat.size()}, std::move(out), "gather", {a},
                     [a, flat](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_buffer(a);
                       for (std::size_t j = 0; j < flat.size(); ++j)
                         ga[flat[j]] += g[j];
                     });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (a.rank() == 0 || s.rank() != 1 || s.dim(0) != a.dim(0)) {
    throw ShapeError("scale_rows: scales " + s.shape().str() +
                         " do not match rows of " + a.shape().str(),
                     0);
  }
  const std::size_t n = a.dim(0);
  const std::size_t width = n == 0 ? 0 : a.numel() / n;
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto f = s.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < width; ++i)
      out[r * width + i] = x[r * width + i] * f[r];
  return make_result(a.shape(), std::move(out), "scale_rows", {a, s},
                     [a, s, n, width](std::span<const double> g) {
                       auto x = a.data();
                       auto f = s.data();
                       if (a.requires_grad()) {
                         auto ga = grad_buffer(a);
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t i = 0; i < width; ++i)
                             ga[r * width + i] += g[r * width + i] * f[r];
                       }
                       if (s.requires_grad()) {
                         auto gs = grad_buffer(s);
                         for (std::size_t r = 0; r < n; ++r) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < width; ++i)
                             acc += g[r * width + i] * x[r * width + i];
                           gs[r] += acc;
                         }
                       }
                     });
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
  require_rank(x, 2, "rms_norm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (weight.rank() != 1 || weight.dim(0) != d) {
    throw ShapeError("rms_norm: weight " + weight.shape().str() +
                         " vs feature width " + std::to_string(d),
                     1);
  }
  std::vector<double> inv(n);
  std::vector<double> out(n * d);
  auto xv = x.data();
  auto w = weight.data();
  for (std::size_t r = 0; r < n; ++r) {
    double ms = 0.0;
    for (std::size_t i = 0; i < d; ++i) ms += xv[r * d + i] * xv[r * d + i];
    inv[r] = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    for (std::size_t i = 0; i < d; ++i)
      out[r * d + i] = xv[r * d + i] * inv[r] * w[i];
  }
  return make_result(
      x.shape(), std::move(out), "rms_norm", {x, weight},
      [x, weight, inv, n, d](std::span<const double> g) {
        auto xv = x.data();
        auto w = weight.data();
        if (weight.requires_grad()) {
          auto gw = grad_buffer(weight);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < d; ++i)
              gw[i] += g[r * d + i] * xv[r * d + i] * inv[r];
        }
        if (x.requires_grad()) {
          auto gx = grad_buffer(x);
          for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i)
              dot += g[r * d + i] * w[i] * xv[r * d + i] * inv[r];
            dot /= static_cast<double>(d);
            for (std::size_t i = 0; i < d; ++i) {
              const double xhat = xv[r * d + i] * inv[r];
              gx[r * d + i] += inv[r] * (g[r * d + i] * w[i] - xhat * dot);
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     double label_smoothing) {
  require_rank(logits, 2, "cross_entropy");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ContractError("cross_entropy: label smoothing " +
                        std::to_string(label_smoothing) +
                        " outside [0, 1)");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows",
                     0);
  }
  if (n == 0) throw ShapeError("cross_entropy: empty batch", 0);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  for (std::size_t t : tgt) {
    if (t >= c) {
      throw ContractError("cross_entropy: target " + std::to_string(t) +
                          " out of range for " + std::to_string(c) +
                          " classes");
    }
  }
  const double eps = label_smoothing;
  const double off = eps / static_cast<double>(c);
  std::vector<double> prob(n * c);
  double loss = 0.0;
  auto x = logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * c;
    double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      const double logp = row[j] - log_z;
      prob[r * c + j] = std::exp(logp);
      const double q = off + (j == tgt[r] ? 1.0 - eps : 0.0);
      if (q != 0.0) loss -= q * logp;
    }
  }
  loss /= static_cast<double>(n);
  return make_result(Shape{}, {loss}, "cross_entropy", {logits},
                     [logits, tgt, prob, n, c, eps, off](
                         std::span<const double> g) {
                       if (!logits.requires_grad()) return;
                       auto gl = grad_buffer(logits);
                       const double f = g[0] / static_cast<double>(n);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double q =
                               off + (j == tgt[r] ? 1.0 - eps : 0.0);
                           gl[r * c + j] += f * (prob[r * c + j] - q);
                         }
                     });
}

Tensor mix(const Tensor& coeffs, const std::vector<Tensor>& experts) {
  require_rank(coeffs, 2, "mix");
  const std::size_t b = coeffs.dim(0), m = coeffs.dim(1);
  if (experts.size() != m) {
    throw ShapeError("mix: " + std::to_string(m) + " coefficients per row for " +
                         std::to_string(experts.size()) + " experts",
                     1);
  }
  if (m == 0) throw ShapeError("mix: no experts", 1);
  const Shape& es = experts.front().shape();
  for (const Tensor& e : experts) {
    if (e.shape() != es) {
      throw ShapeError("mix: expert shapes differ, " + e.shape().str() +
                       " vs " + es.str());
    }
  }
  const std::size_t size = es.numel();
  std::vector<double> out(b * size, 0.0);
  auto a = coeffs.data();
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = 0; i < m; ++i) {
      const double alpha = a[s * m + i];
      auto w = experts[i].data();
      double* dst = out.data() + s * size;
      for (std::size_t k = 0; k < size; ++k) dst[k] += alpha * w[k];
    }
  std::vector<std::size_t> dims{b};
  dims.insert(dims.end(), es.dims().begin(), es.dims().end());
  std::vector<Tensor> inputs{coeffs};
  inputs.insert(inputs.end(), experts.begin(), experts.end());
  return make_result(
      Shape(std::move(dims)), std::move(out), "mix", inputs,
      [coeffs, experts, b, m, size](std::span<const double> g) {
        auto a = coeffs.data();
        if (coeffs.requires_grad()) {
          auto gc = grad_buffer(coeffs);
          for (std::size_t s = 0; s < b; ++s)
            for (std::size_t i = 0; i < m; ++i) {
              auto w = experts[i].data();
              double acc = 0.0;
              for (std::size_t k = 0; k < size; ++k)
                acc += g[s * size + k] * w[k];
              gc[s * m + i] += acc;
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
          if (!experts[i].requires_grad()) continue;
          auto ge = grad_buffer(experts[i]);
          for (std::size_t s = 0; s < b; ++s) {
            const double alpha = a[s * m + i];
            for (std::size_t k = 0; k < size; ++k)
              ge[k] += alpha * g[s * size + k];
          }
        }
      });
}

}  // namespace paramaug
