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

#include "moefusion/optim.hpp"

#include <cmath>

#include "moefusion/error.hpp"

namespace moefusion {

Var ParameterStore::add(const std::string& name, Tensor init) {
  require(!contains(name), ErrorCode::kInvalidArgument, "duplicate parameter name '" + name + "'");
  const Shape s = init.shape();
  Entry e{Var::parameter(std::move(init)), AdamState{0, Tensor::zeros(s), Tensor::zeros(s)}};
  auto [it, _] = entries_.emplace(name, std::move(e));
  return it->second.param;
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), ErrorCode::kInvalidArgument, "unknown parameter '" + name + "'");
  return it->second.param;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.param.value().size();
  return n;
}

AdamState& ParameterStore::state(const std::string& name) {
  auto it = entries_.find(name);
  require(it != entries_.end(), ErrorCode::kInvalidArgument, "unknown parameter '" + name + "'");
  return it->second.adam;
}

const AdamState& ParameterStore::state(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), ErrorCode::kInvalidArgument, "unknown parameter '" + name + "'");
  return it->second.adam;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) e.param.zero_grad();
}

void ParameterStore::populate_missing_grads() {
  for (auto& [_, e] : entries_) e.param.node()->grad_buffer();
}

void ParameterStore::adam_step(const AdamOptions& opt) {
  for (const auto& [name, e] : entries_) {
    require(e.param.has_grad(), ErrorCode::kInvalidArgument,
            "adam_step: parameter '" + name + "' has no gradient");
  }
  for (auto& [name, e] : entries_) {
    AdamState& st = e.adam;
    st.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.step));
    Tensor& p = e.param.mutable_value();
    const Tensor& g = e.param.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      st.first_moment[i] = opt.beta1 * st.first_moment[i] + (1.0 - opt.beta1) * g[i];
      st.second_moment[i] = opt.beta2 * st.second_moment[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = st.first_moment[i] / bc1;
      const double v_hat = st.second_moment[i] / bc2;
      p[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
    e.param.zero_grad();
  }
}

}  // namespace moefusion
