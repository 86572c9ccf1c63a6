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

#include <span>
#include <string>

#include "moefusion/autodiff.hpp"

namespace moefusion {

struct LossConfig {
  double alpha = 10.0;
  double load_weight = 0.01;
};

struct LossBreakdown {
  double pixel_fg = 0.0;
  double pixel_bg = 0.0;
  double grad = 0.0;
  double load_local = 0.0;
  double load_global = 0.0;
  double total = 0.0;
  Var total_var;
};

// All image arguments are (batch, 1, H, W); per-image terms are averaged
// over the batch, which equals the mean over all batch pixels.

// mean |mask * (fused - max(visible, infrared))|
Var pixel_loss_fg(const Var& fused, const Var& visible, const Var& infrared, const Var& mask);
// mean |(1 - mask) * (fused - (visible + infrared) / 2)|
Var pixel_loss_bg(const Var& fused, const Var& visible, const Var& infrared, const Var& mask);
// mean | |grad fused| - max(|grad visible|, |grad infrared|) | with Sobel magnitudes.
Var gradient_loss(const Var& fused, const Var& visible, const Var& infrared);
// cv_squared(local) + cv_squared(global); either may be undefined (ablations).
Var load_loss(const Var& importance_local, const Var& importance_global);

struct LossInputs {
  Var fused;
  Var visible;
  Var infrared;
  Var mask;
  Var importance_local;   // (1, N, 1, 1) or undefined
  Var importance_global;  // (1, N, 1, 1) or undefined
};

LossBreakdown total_loss(const LossConfig& cfg, const LossInputs& in);

// Name and value of the first non-finite term, or empty.
std::string first_nonfinite_term(const LossBreakdown& b);

}  // namespace moefusion
