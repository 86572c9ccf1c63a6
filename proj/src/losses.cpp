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

#include "moefusion/losses.hpp"

#include <cmath>

#include "moefusion/error.hpp"
#include "moefusion/gating.hpp"
#include "moefusion/ops.hpp"

namespace moefusion {

namespace {

void check_images(const Var& fused, const Var& visible, const Var& infrared, const char* op) {
  const Shape fs = fused.shape();
  require(fs.c == 1, ErrorCode::kShape, std::string(op) + ": images must be single-channel");
  require(visible.shape() == fs && infrared.shape() == fs, ErrorCode::kShape,
          std::string(op) + ": image shapes differ: " + to_string(fs) + ", " +
              to_string(visible.shape()) + ", " + to_string(infrared.shape()));
}

void check_mask(const Var& mask, const Shape& s, const char* op) {
  require(mask.shape() == s, ErrorCode::kShape,
          std::string(op) + ": mask shape " + to_string(mask.shape()) + " != " + to_string(s));
  for (double v : mask.value().values())
    require(v == 0.0 || v == 1.0, ErrorCode::kInvalidArgument,
            std::string(op) + ": mask must be binary, found value " + std::to_string(v));
}

}  // namespace

Var pixel_loss_fg(const Var& fused, const Var& visible, const Var& infrared, const Var& mask) {
  check_images(fused, visible, infrared, "pixel_loss_fg");
  check_mask(mask, fused.shape(), "pixel_loss_fg");
  return mean_all(abs(mul(mask, sub(fused, max_elementwise(visible, infrared)))));
}

Var pixel_loss_bg(const Var& fused, const Var& visible, const Var& infrared, const Var& mask) {
  check_images(fused, visible, infrared, "pixel_loss_bg");
  check_mask(mask, fused.shape(), "pixel_loss_bg");
  return mean_all(abs(mul(one_minus(mask), sub(fused, mean_elementwise(visible, infrared)))));
}

Var gradient_loss(const Var& fused, const Var& visible, const Var& infrared) {
  check_images(fused, visible, infrared, "gradient_loss");
  const Var target = max_elementwise(sobel_magnitude(visible), sobel_magnitude(infrared));
  return l1_mean(sobel_magnitude(fused), target);
}

Var load_loss(const Var& importance_local, const Var& importance_global) {
  Var total = Var::constant(Tensor::scalar(0.0));
  if (importance_local.defined()) total = add(total, cv_squared(importance_local));
  if (importance_global.defined()) total = add(total, cv_squared(importance_global));
  return total;
}

LossBreakdown total_loss(const LossConfig& cfg, const LossInputs& in) {
  require(cfg.alpha > 0.0, ErrorCode::kInvalidArgument, "total_loss: alpha must be > 0");
  require(cfg.load_weight >= 0.0, ErrorCode::kInvalidArgument,
          "total_loss: load_weight must be >= 0");
  const Var fg = pixel_loss_fg(in.fused, in.visible, in.infrared, in.mask);
  const Var bg = pixel_loss_bg(in.fused, in.visible, in.infrared, in.mask);
  const Var grad = gradient_loss(in.fused, in.visible, in.infrared);
  const Var zero = Var::constant(Tensor::scalar(0.0));
  const Var ll = in.importance_local.defined() ? cv_squared(in.importance_local) : zero;
  const Var lg = in.importance_global.defined() ? cv_squared(in.importance_global) : zero;

  LossBreakdown out;
  out.total_var = add(add(fg, bg), mul_scalar(grad, cfg.alpha));
  if (cfg.load_weight != 0.0) out.total_var = add(out.total_var, mul_scalar(add(ll, lg), cfg.load_weight));
  out.pixel_fg = fg.value().item();
  out.pixel_bg = bg.value().item();
  out.grad = grad.value().item();
  out.load_local = ll.value().item();
  out.load_global = lg.value().item();
  out.total = out.total_var.value().item();
  return out;
}

std::string first_nonfinite_term(const LossBreakdown& b) {
  const std::pair<const char*, double> terms[] = {
      {"pixel_fg", b.pixel_fg},       {"pixel_bg", b.pixel_bg},
      {"grad", b.grad},               {"load_local", b.load_local},
      {"load_global", b.load_global}, {"total", b.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) return name;
  return "";
}

}  // namespace moefusion
