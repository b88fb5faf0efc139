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
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "paramaug/error.hpp"

namespace paramaug {

class Rng;

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  /// Product of extents; 1 for rank 0.
  std::size_t numel() const;

  bool operator==(const Shape&) const = default;
  std::string str() const;

 private:
  std::vector<std::size_t> dims_;
};

class Tensor;

/// One recorded operation. `backward` receives the gradient of the node's
/// output and accumulates into the gradients of `inputs`.
struct TapeNode {
  std::string op;
  std::vector<Tensor> inputs;
  std::function<void(std::span<const double> grad_out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;
};

/// Shared handle to a dense row-major float64 array. Copies alias the same
/// storage; use `clone()` or `detach()` for a distinct array.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor ones(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);
  static Tensor normal(const Shape& shape, Rng& rng, double stddev,
                       bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t rank() const { return impl_->shape.rank(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Writable storage. Only for leaves (parameter updates, fixtures);
  /// mutating a tensor that is an input of a live graph invalidates it.
  std::span<double> mutable_data() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->node == nullptr; }
  const TapeNode* node() const { return impl_->node.get(); }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Empty span until a backward pass reaches this tensor.
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, no history, no grad requirement, fresh storage.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  TensorImpl& impl() const { return *impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode sweep from a single-element tensor. Every reachable tensor
/// with requires_grad receives d(loss)/d(tensor); leaf gradients accumulate
/// across calls, interior gradients are recomputed each call.
void backward(const Tensor& loss);

/// Whether newly created op outputs record tape nodes on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Test fixture: while alive, the backward rule of every node whose op name
/// equals `op` sees its incoming gradient multiplied by `factor`. Thread-local.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(std::string op, double factor);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
};

namespace detail {

/// Builds an op result. A tape node is attached only when grad mode is on and
/// some input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                   std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward);

/// Gradient buffer of `t`, allocated on first use. Callers must check
/// `t.requires_grad()` first.
std::span<double> grad_buffer(const Tensor& t);

}  // namespace detail

}  // namespace paramaug
