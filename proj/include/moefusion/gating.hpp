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

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moefusion/autodiff.hpp"
#include "moefusion/optim.hpp"

namespace moefusion {

struct GateDecision {
  std::size_t experts = 0;
  std::size_t top_k = 0;
  // Per sample: (expert_index, weight) in descending-logit order.
  std::vector<std::vector<std::pair<std::size_t, double>>> selected;
  // (batch, experts, 1, 1); exactly top_k nonzeros per sample.
  Tensor dense;
  // Batch sum of `dense`, length `experts`.
  std::vector<double> importance;

  std::size_t batch() const { return selected.size(); }
  // Sample indices routed to each expert, ascending.
  std::vector<std::vector<std::size_t>> members() const;
};

// Indices of the k largest values; ties resolve toward the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> logits, std::size_t k);

struct Routing {
  Var gates;  // dense gate weights, differentiable through the selected logits
  GateDecision decision;
};

// softmax over only the k selected logits of each row; the selection mask is
// treated as a constant. logits: (batch, experts, 1, 1).
Routing route_logits(const Var& logits, std::size_t k);

// Linear top-K gate: logits = s · W with W of shape (D, N), zero-initialised.
class GateLayer {
 public:
  GateLayer() = default;
  GateLayer(ParameterStore& store, const std::string& name, std::size_t input_dim,
            std::size_t experts, std::size_t top_k);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t experts() const { return experts_; }
  std::size_t top_k() const { return top_k_; }
  const Var& weight() const { return weight_; }

  // s: (batch, D, 1, 1)
  Routing route(const Var& s) const;

 private:
  Var weight_;
  std::size_t input_dim_ = 0;
  std::size_t experts_ = 0;
  std::size_t top_k_ = 0;
};

// Per-expert batch sum of gate weights: (batch, N, 1, 1) -> (1, N, 1, 1).
Var importance(const Var& gates);
std::vector<double> importance(std::span<const GateDecision> decisions);

inline constexpr double kCvMeanFloor = 1e-10;

// Population variance over squared mean; 0 when the mean is below 1e-10.
Var cv_squared(const Var& v);
double cv_squared(std::span<const double> v);

}  // namespace moefusion
