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

#include "moefusion/gating.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moefusion/error.hpp"
#include "moefusion/ops.hpp"

namespace moefusion {

std::vector<std::vector<std::size_t>> GateDecision::members() const {
  std::vector<std::vector<std::size_t>> out(experts);
  for (std::size_t b = 0; b < selected.size(); ++b)
    for (const auto& [e, _] : selected[b]) out[e].push_back(b);
  return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> logits, std::size_t k) {
  require(k >= 1 && k <= logits.size(), ErrorCode::kInvalidArgument,
          "top_k_indices: k=" + std::to_string(k) + " outside [1, " +
              std::to_string(logits.size()) + "]");
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  idx.resize(k);
  return idx;
}

Routing route_logits(const Var& logits, std::size_t k) {
  const Shape ls = logits.shape();
  require(ls.h == 1 && ls.w == 1, ErrorCode::kShape,
          "route: logits must be (batch, experts, 1, 1), got " + to_string(ls));
  const std::size_t batch = ls.n, experts = ls.c;
  require(k >= 1 && k <= experts, ErrorCode::kInvalidArgument,
          "route: top_k=" + std::to_string(k) + " outside [1, " + std::to_string(experts) + "]");

  GateDecision d;
  d.experts = experts;
  d.top_k = k;
  d.selected.resize(batch);
  d.dense = Tensor::zeros(ls);
  d.importance.assign(experts, 0.0);
  std::vector<std::vector<std::size_t>> chosen(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::span<const double> row(logits.value().data() + b * experts, experts);
    chosen[b] = top_k_indices(row, k);
    const double top = row[chosen[b][0]];
    double z = 0.0;
    std::vector<double> e(k);
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(row[chosen[b][j]] - top);
      z += e[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double w = e[j] / z;
      d.selected[b].emplace_back(chosen[b][j], w);
      d.dense[b * experts + chosen[b][j]] = w;
    }
  }
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t e = 0; e < experts; ++e) d.importance[e] += d.dense[b * experts + e];

  Var gates = make_result(d.dense, {logits}, [chosen, experts](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& gl = self.inputs[0]->grad_buffer();
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      double dot = 0.0;
      for (std::size_t e : chosen[b])
        dot += self.value[b * experts + e] * self.grad[b * experts + e];
      for (std::size_t e : chosen[b]) {
        const std::size_t i = b * experts + e;
        gl[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
  return {std::move(gates), std::move(d)};
}

GateLayer::GateLayer(ParameterStore& store, const std::string& name, std::size_t input_dim,
                     std::size_t experts, std::size_t top_k)
    : input_dim_(input_dim), experts_(experts), top_k_(top_k) {
  require(top_k >= 1 && top_k <= experts, ErrorCode::kInvalidArgument,
          "gate '" + name + "': top_k=" + std::to_string(top_k) + " outside [1, " +
              std::to_string(experts) + "]");
  weight_ = store.add(name + ".weight", Tensor::zeros({1, 1, input_dim, experts}));
}

Routing GateLayer::route(const Var& s) const {
  require(s.shape().c == input_dim_ && s.shape().h == 1 && s.shape().w == 1, ErrorCode::kShape,
          "route: expected flattened features of length " + std::to_string(input_dim_) +
              ", got shape " + to_string(s.shape()));
  return route_logits(linear(s, weight_), top_k_);
}

Var importance(const Var& gates) { return sum_batch(gates); }

std::vector<double> importance(std::span<const GateDecision> decisions) {
  require(!decisions.empty(), ErrorCode::kInvalidArgument, "importance: empty batch");
  std::vector<double> out(decisions[0].experts, 0.0);
  for (const auto& d : decisions) {
    require(d.experts == out.size(), ErrorCode::kShape, "importance: expert count mismatch");
    for (std::size_t e = 0; e < out.size(); ++e) out[e] += d.importance[e];
  }
  return out;
}

double cv_squared(std::span<const double> v) {
  require(!v.empty(), ErrorCode::kInvalidArgument, "cv_squared: empty vector");
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (mean < kCvMeanFloor) return 0.0;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  return var / (mean * mean);
}

Var cv_squared(const Var& v) {
  const std::span<const double> vals = v.value().values();
  require(!vals.empty(), ErrorCode::kInvalidArgument, "cv_squared: empty vector");
  const double n = static_cast<double>(vals.size());
  double mean = 0.0;
  for (double x : vals) mean += x;
  mean /= n;
  if (mean < kCvMeanFloor) return Var::constant(Tensor::scalar(0.0));
  double var = 0.0;
  for (double x : vals) var += (x - mean) * (x - mean);
  var /= n;
  const double value = var / (mean * mean);
  return make_result(Tensor::scalar(value), {v}, [mean, var, n](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& g = self.inputs[0]->grad_buffer();
    const Tensor& x = self.inputs[0]->value;
    const double m2 = mean * mean;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = 2.0 * (x[i] - mean) / (n * m2) - 2.0 * var / (m2 * mean * n);
      g[i] += self.grad[0] * d;
    }
  });
}

}  // namespace moefusion
