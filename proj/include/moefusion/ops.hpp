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
#include <vector>

#include "moefusion/autodiff.hpp"

namespace moefusion {

// Stride-1 "same" convolution with reflect padding of (k - 1) / 2.
// weight: (out_ch, in_ch, kh, kw) with odd kh, kw; bias: (1, out_ch, 1, 1).
Var conv2d(const Var& input, const Var& weight, const Var& bias);

enum class BatchNormMode { kTrain, kEval };

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormStats fresh(std::size_t channels);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization over (batch, H, W). Train mode updates `stats`
// (running variance uses the unbiased estimate); eval mode reads them.
Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, BatchNormStats& stats,
                BatchNormMode mode);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
// Subgradient at exactly 0 is 0.
Var abs(const Var& x);

// Binary ops require equal shapes, except that a (1,1,1,1) operand broadcasts.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// Gradient goes to the larger input; ties go to `a`.
Var max_elementwise(const Var& a, const Var& b);
// (a + b) / 2
Var mean_elementwise(const Var& a, const Var& b);

Var add_scalar(const Var& x, double s);
Var mul_scalar(const Var& x, double s);
// 1 - x
Var one_minus(const Var& x);

Var concat_channels(std::span<const Var> parts);
// (n, c, h, w) -> (n, c*h*w, 1, 1)
Var flatten(const Var& x);

Var sum_all(const Var& x);
Var mean_all(const Var& x);
// mean |a - b| over all elements, as a scalar.
Var l1_mean(const Var& a, const Var& b);

// x: (n, c, h, w), map: (n, 1, h, w); every channel of x is scaled by map.
Var mul_channel_broadcast(const Var& x, const Var& map);
// Maximum across channels; gradient goes to the first maximal channel.
Var channel_max(const Var& x);

// |Gx * I| + |Gy * I| with the 3x3 Sobel kernels and reflect padding.
// Input must be single-channel.
Var sobel_magnitude(const Var& x);

// s: (batch, d, 1, 1), weight: (1, 1, d, n) -> (batch, n, 1, 1).
Var linear(const Var& s, const Var& weight);

// Gathers samples `indices` of the batch dimension.
Var select_batch(const Var& x, std::span<const std::size_t> indices);
// (batch, n, 1, 1) -> (1, n, 1, 1)
Var sum_batch(const Var& x);

// out[b] = sum_i gates[b, i] * outputs[i][pos_i(b)], where outputs[i] holds
// the samples listed in members[i] (in that order). Experts with no members
// pass an undefined Var.
Var moe_combine(std::span<const Var> outputs, std::span<const std::vector<std::size_t>> members,
                const Var& gates);

}  // namespace moefusion
