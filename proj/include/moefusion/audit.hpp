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
#include <functional>
#include <string>
#include <vector>

#include "moefusion/autodiff.hpp"

namespace moefusion {

// A differentiable input examined by the finite-difference check. `probe`
// lists the element indices compared; empty means every element.
struct GradLeaf {
  std::string name;
  Var var;
  std::vector<std::size_t> probe;
};

struct GradcheckResult {
  // max |analytic - numeric| / max(max |numeric|, 1e-12) over the probes used.
  double rel_error = 0.0;
  std::size_t probes = 0;
  // Probes where the forward and backward one-sided differences disagree,
  // i.e. the step straddles a kink (ReLU, max, abs). They are left out.
  std::size_t skipped = 0;
};

// Central differences of step `h` on every probed element of every leaf.
// `objective` must rebuild the scalar from the leaves' current values.
GradcheckResult gradcheck(const std::function<Var()>& objective, std::vector<GradLeaf>& leaves,
                          double h = 1e-4);

// At most this fraction of probes may be skipped before a case fails.
inline constexpr double kMaxSkippedFraction = 0.1;

struct AuditCase {
  std::string name;
  double rel_error = 0.0;
  double threshold = 0.0;
  std::size_t probes = 0;
  std::size_t skipped = 0;

  bool passed() const {
    return rel_error < threshold &&
           static_cast<double>(skipped) <= kMaxSkippedFraction * static_cast<double>(probes);
  }
};

struct AuditReport {
  std::string module;
  std::uint64_t seed = 0;
  std::vector<AuditCase> cases;

  bool passed() const;
  // Case with the largest relative error.
  const AuditCase& worst() const;
};

// "autodiff-core", "gating", "fusion-net", "losses".
const std::vector<std::string>& audit_modules();
bool is_audit_module(const std::string& name);

// Finite-difference audit of one module on small (8x8 for images) random
// inputs drawn from `seed`. Throws kInvalidArgument for unknown modules.
AuditReport run_audit(const std::string& module, std::uint64_t seed);

}  // namespace moefusion
