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

#include "paramaug/tensor.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "paramaug/rng.hpp"

namespace paramaug {

namespace {

thread_local bool tl_grad_enabled = true;

struct Fault {
  std::string op;
  double factor;
};
thread_local std::optional<Fault> tl_fault;

}  // namespace

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (data.size() != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape.str());
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::ones(const Shape& shape, bool requires_grad) {
  return full(shape, 1.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape.numel(), value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), requires_grad);
}

Tensor Tensor::normal(const Shape& shape, Rng& rng, double stddev,
                      bool requires_grad) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor(shape, std::move(v), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape().str());
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& dims = shape().dims();
  if (index.size() != dims.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) +
                     " vs tensor rank " + std::to_string(dims.size()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= dims[axis]) {
      throw ShapeError("index out of range on axis " + std::to_string(axis),
                       static_cast<int>(axis));
    }
    flat = flat * dims[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  return detail::grad_buffer(*this);
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(shape(), impl_->data, requires_grad);
}

bool grad_enabled() { return tl_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tl_grad_enabled) {
  tl_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { tl_grad_enabled = previous_; }

ScopedBackwardFault::ScopedBackwardFault(std::string op, double factor) {
  tl_fault = Fault{std::move(op), factor};
}

ScopedBackwardFault::~ScopedBackwardFault() { tl_fault.reset(); }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                   std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!tl_grad_enabled) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<TapeNode>();
  node->op = std::move(op);
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  out.impl().requires_grad = true;
  out.impl().node = std::move(node);
  return out;
}

std::span<double> grad_buffer(const Tensor& t) {
  TensorImpl& impl = t.impl();
  if (impl.grad.size() != impl.data.size()) {
    impl.grad.assign(impl.data.size(), 0.0);
  }
  return impl.grad;
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a single-element loss, got shape " +
                        loss.shape().str());
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a tensor that does not require grad");
  }

  // Post-order DFS over interior tensors; each node visited once.
  std::vector<TensorImpl*> order;
  std::vector<TensorImpl*> leaves;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  if (loss.impl().node) {
    stack.emplace_back(&loss.impl(), 0);
    seen.insert(&loss.impl());
  }
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->node->inputs;
    if (next < inputs.size()) {
      TensorImpl* child = &inputs[next++].impl();
      if (!child->requires_grad || !seen.insert(child).second) continue;
      if (child->node) {
        stack.emplace_back(child, 0);
      } else {
        leaves.push_back(child);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  for (TensorImpl* impl : order) impl->grad.assign(impl->data.size(), 0.0);
  if (loss.is_leaf()) {
    detail::grad_buffer(loss)[0] += 1.0;
    return;
  }
  loss.impl().grad[0] = 1.0;

  // Each pass accumulates into fresh leaf buffers which are then added to
  // the previous totals, so k identical passes give exactly k times one pass.
  std::vector<std::vector<double>> previous(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    previous[i] = std::move(leaves[i]->grad);
    leaves[i]->grad.assign(leaves[i]->data.size(), 0.0);
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    const TapeNode& node = *impl->node;
    if (tl_fault && tl_fault->op == node.op) {
      std::vector<double> scaled(impl->grad);
      for (double& g : scaled) g *= tl_fault->factor;
      node.backward(scaled);
    } else {
      node.backward(impl->grad);
    }
  }

  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto& prev = previous[i];
    if (prev.size() != leaves[i]->grad.size()) continue;
    for (std::size_t k = 0; k < prev.size(); ++k) leaves[i]->grad[k] += prev[k];
  }
}

}  // namespace paramaug
