/* Copyright 2026 The moefusion Authors. All Rights Reserved.

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

#include <functional>
#include <memory>
#include <vector>

#include "moefusion/tensor.hpp"

namespace moefusion {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `backward` reads `grad` of this node
// and accumulates into the grads of `inputs`.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  // Lazily allocates a zero gradient matching `value`.
  Tensor& grad_buffer();
};

// Handle to a tape node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  // Seeds d(this)/d(this) = 1; this must be a scalar.
  void backward() const;
  void backward(const Tensor& seed) const;

  const NodePtr& node() const noexcept { return node_; }

 private:
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  friend Var make_result(Tensor, std::vector<Var>, std::function<void(Node&)>);

  NodePtr node_;
};

// Registers an operation result. The backward closure is kept only when grad
// recording is enabled and at least one input requires grad.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Accumulates into input `i` of `self` if that input tracks gradients.
inline bool wants_grad(const Node& self, std::size_t i) {
  return self.inputs[i] && self.inputs[i]->requires_grad;
}

bool grad_enabled() noexcept;

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace moefusion
