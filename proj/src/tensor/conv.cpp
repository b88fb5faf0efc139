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
#include <string>

#include "paramaug/ops.hpp"

namespace paramaug {

using detail::grad_buffer;
using detail::make_result;

namespace {

struct ConvDims {
  std::size_t batch, c_in, h, w;
  std::size_t c_out, k;
  std::size_t stride, pad, groups;
  std::size_t out_h, out_w;

  std::size_t cin_g() const { return c_in / groups; }
  std::size_t cout_g() const { return c_out / groups; }
  std::size_t x_size() const { return c_in * h * w; }
  std::size_t y_size() const { return c_out * out_h * out_w; }
  std::size_t w_size() const { return c_out * cin_g() * k * k; }
};

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
inline void tap_range(std::size_t tap, std::size_t pad, std::size_t stride,
                      std::size_t in, std::size_t out, std::size_t& lo,
                      std::size_t& hi) {
  const long t = static_cast<long>(tap) - static_cast<long>(pad);
  const long s = static_cast<long>(stride);
  long first = t >= 0 ? 0 : (-t + s - 1) / s;
  long last = (static_cast<long>(in) - 1 - t);
  long end = last < 0 ? 0 : last / s + 1;
  lo = static_cast<std::size_t>(std::max(0L, first));
  hi = static_cast<std::size_t>(
      std::clamp(end, 0L, static_cast<long>(out)));
  if (hi < lo) hi = lo;
}

// One sample forward: y must hold y_size() elements and is overwritten.
void conv_sample_forward(const ConvDims& d, const double* x, const double* w,
                         const double* bias, double* y) {
  const std::size_t plane = d.out_h * d.out_w;
  for (std::size_t co = 0; co < d.c_out; ++co)
    std::fill_n(y + co * plane, plane, bias ? bias[co] : 0.0);
  for (std::size_t co = 0; co < d.c_out; ++co) {
    const std::size_t g = co / d.cout_g();
    double* yc = y + co * plane;
    for (std::size_t ci = 0; ci < d.cin_g(); ++ci) {
      const double* xc = x + (g * d.cin_g() + ci) * d.h * d.w;
      for (std::size_t kh = 0; kh < d.k; ++kh) {
        std::size_t oh0, oh1;
        tap_range(kh, d.pad, d.stride, d.h, d.out_h, oh0, oh1);
        for (std::size_t kw = 0; kw < d.k; ++kw) {
          std::size_t ow0, ow1;
          tap_range(kw, d.pad, d.stride, d.w, d.out_w, ow0, ow1);
          const double wv = w[((co * d.cin_g() + ci) * d.k + kh) * d.k + kw];
          for (std::size_t oh = oh0; oh < oh1; ++oh) {
            const double* xr = xc + (oh * d.stride + kh - d.pad) * d.w;
            double* yr = yc + oh * d.out_w;
            for (std::size_t ow = ow0; ow < ow1; ++ow)
              yr[ow] += wv * xr[ow * d.stride + kw - d.pad];
          }
        }
      }
    }
  }
}

// Accumulates into whichever of gx / gw / gb is non-null.
void conv_sample_backward(const ConvDims& d, const double* x, const double* w,
                          const double* gy, double* gx, double* gw,
                          double* gb) {
  const std::size_t plane = d.out_h * d.out_w;
  for (std::size_t co = 0; co < d.c_out; ++co) {
    const std::size_t g = co / d.cout_g();
    const double* gyc = gy + co * plane;
    if (gb) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += gyc[i];
      gb[co] += acc;
    }
    if (!gx && !gw) continue;
    for (std::size_t ci = 0; ci < d.cin_g(); ++ci) {
      const std::size_t xoff = (g * d.cin_g() + ci) * d.h * d.w;
      for (std::size_t kh = 0; kh < d.k; ++kh) {
        std::size_t oh0, oh1;
        tap_range(kh, d.pad, d.stride, d.h, d.out_h, oh0, oh1);
        for (std::size_t kw = 0; kw < d.k; ++kw) {
          std::size_t ow0, ow1;
          tap_range(kw, d.pad, d.stride, d.w, d.out_w, ow0, ow1);
          const std::size_t widx = ((co * d.cin_g() + ci) * d.k + kh) * d.k + kw;
          const double wv = w[widx];
          double wacc = 0.0;
          for (std::size_t oh = oh0; oh < oh1; ++oh) {
            const std::size_t row = xoff + (oh * d.stride + kh - d.pad) * d.w;
            const double* gyr = gyc + oh * d.out_w;
            for (std::size_t ow = ow0; ow < ow1; ++ow) {
              const std::size_t xi = row + ow * d.stride + kw - d.pad;
              if (gx) gx[xi] += wv * gyr[ow];
              wacc += x[xi] * gyr[ow];
            }
          }
          if (gw) gw[widx] += wacc;
        }
      }
    }
  }
}

ConvDims validate(const Tensor& x, const Tensor& w, ConvGeometry geo,
                  bool per_sample, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": input must be [B,C,H,W], got " +
                     x.shape().str());
  }
  const std::size_t wr = per_sample ? 5 : 4;
  if (w.rank() != wr) {
    throw ShapeError(std::string(op) + ": weight rank " +
                     std::to_string(w.rank()) + ", expected " +
                     std::to_string(wr));
  }
  const std::size_t o = per_sample ? 1 : 0;
  if (per_sample && w.dim(0) != x.dim(0)) {
    throw ShapeError(std::string(op) + ": " + std::to_string(w.dim(0)) +
                         " kernels for batch of " + std::to_string(x.dim(0)),
                     0);
  }
  if (geo.stride < 1) throw ContractError(std::string(op) + ": stride must be >= 1");
  if (geo.groups < 1) throw ContractError(std::string(op) + ": groups must be >= 1");
  ConvDims d{};
  d.batch = x.dim(0);
  d.c_in = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.c_out = w.dim(o);
  d.k = w.dim(o + 2);
  d.stride = geo.stride;
  d.pad = geo.padding;
  d.groups = geo.groups;
  if (w.dim(o + 3) != d.k) {
    throw ShapeError(std::string(op) + ": kernel must be square, got " +
                         w.shape().str(),
                     static_cast<int>(o + 3));
  }
  if (d.c_in % d.groups != 0) {
    throw ShapeError(std::string(op) + ": input channels " +
                         std::to_string(d.c_in) + " not divisible by groups " +
                         std::to_string(d.groups),
                     1);
  }
  if (d.c_out % d.groups != 0) {
    throw ShapeError(std::string(op) + ": output channels " +
                         std::to_string(d.c_out) + " not divisible by groups " +
                         std::to_string(d.groups),
                     static_cast<int>(o));
  }
  if (w.dim(o + 1) != d.c_in / d.groups) {
    throw ShapeError(std::string(op) + ": weight expects " +
                         std::to_string(w.dim(o + 1) * d.groups) +
                         " input channels, input has " + std::to_string(d.c_in),
                     1);
  }
  d.out_h = conv_output_extent(d.h, d.k, d.stride, d.pad);
  d.out_w = conv_output_extent(d.w, d.k, d.stride, d.pad);
  return d;
}

void validate_bias(const std::optional<Tensor>& bias, const ConvDims& d,
                   bool per_sample, const char* op) {
  if (!bias) return;
  const Shape expect = per_sample ? Shape{d.batch, d.c_out} : Shape{d.c_out};
  if (bias->shape() != expect) {
    throw ShapeError(std::string(op) + ": bias " + bias->shape().str() +
                     ", expected " + expect.str());
  }
}

Tensor conv_impl(const Tensor& x, const Tensor& w,
                 const std::optional<Tensor>& bias, ConvGeometry geo,
                 bool per_sample) {
  const char* op = per_sample ? "conv2d_per_sample"
                   : geo.groups == 1 ? "conv2d"
                                     : "grouped_conv2d";
  const ConvDims d = validate(x, w, geo, per_sample, op);
  validate_bias(bias, d, per_sample, op);
  std::vector<double> out(d.batch * d.y_size());
  const std::size_t wstep = per_sample ? d.w_size() : 0;
  const std::size_t bstep = per_sample ? d.c_out : 0;
  auto xv = x.data();
  auto wv = w.data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    conv_sample_forward(d, xv.data() + b * d.x_size(), wv.data() + b * wstep,
                        bias ? bias->data().data() + b * bstep : nullptr,
                        out.data() + b * d.y_size());
  }
  std::vector<Tensor> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_result(
      Shape{d.batch, d.c_out, d.out_h, d.out_w}, std::move(out), op, inputs,
      [x, w, bias, d, wstep, bstep](std::span<const double> g) {
        double* gx = x.requires_grad() ? grad_buffer(x).data() : nullptr;
        double* gw = w.requires_grad() ? grad_buffer(w).data() : nullptr;
        double* gb = bias && bias->requires_grad() ? grad_buffer(*bias).data()
                                                   : nullptr;
        auto xv = x.data();
        auto wv = w.data();
        for (std::size_t b = 0; b < d.batch; ++b) {
          conv_sample_backward(d, xv.data() + b * d.x_size(),
                               wv.data() + b * wstep, g.data() + b * d.y_size(),
                               gx ? gx + b * d.x_size() : nullptr,
                               gw ? gw + b * wstep : nullptr,
                               gb ? gb + b * bstep : nullptr);
        }
      });
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k,
                               std::size_t stride, std::size_t padding) {
  if (stride < 1) throw ContractError("stride must be >= 1");
  const std::size_t padded = in + 2 * padding;
  if (k == 0 || padded < k) {
    throw GeometryError("kernel " + std::to_string(k) +
                        " does not fit padded extent " +
                        std::to_string(padded));
  }
  return (padded - k) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& bias, ConvGeometry geometry) {
  return conv_impl(x, w, bias, geometry, false);
}

Tensor conv2d(const Tensor& x, const Tensor& w,
              const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding) {
  return conv_impl(x, w, bias, ConvGeometry{stride, padding, 1}, false);
}

Tensor grouped_conv2d(const Tensor& x, const Tensor& w, std::size_t groups,
                      const std::optional<Tensor>& bias, std::size_t stride,
                      std::size_t padding) {
  return conv_impl(x, w, bias, ConvGeometry{stride, padding, groups}, false);
}

Tensor conv2d_per_sample(const Tensor& x, const Tensor& w,
                         const std::optional<Tensor>& bias,
                         ConvGeometry geometry) {
  return conv_impl(x, w, bias, geometry, true);
}

}  // namespace paramaug
