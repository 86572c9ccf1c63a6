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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moefusion/autodiff.hpp"

namespace moefusion {

struct AdamState {
  std::uint64_t step = 0;
  Tensor first_moment;
  Tensor second_moment;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable tensors plus their optimizer state. Iteration order is the
// lexicographic name order, which fixes the checkpoint layout.
class ParameterStore {
 public:
  // Registers a leaf parameter; names must be unique.
  Var add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Var& get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  AdamState& state(const std::string& name);
  const AdamState& state(const std::string& name) const;

  void zero_grad();
  // Gives every parameter that did not take part in the last backward pass a
  // zero gradient (e.g. experts no sample was routed to).
  void populate_missing_grads();

  // One bias-corrected Adam update over every parameter, then clears grads.
  // Throws naming the first parameter without a gradient.
  void adam_step(const AdamOptions& opt);

 private:
  struct Entry {
    Var param;
    AdamState adam;
  };
  std::map<std::string, Entry> entries_;
};

}  // namespace moefusion
