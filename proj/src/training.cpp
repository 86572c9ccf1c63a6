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

#include "moefusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "moefusion/error.hpp"
#include "moefusion/rng.hpp"

namespace moefusion {

namespace {

Tensor stack(const std::vector<const Tensor*>& items) {
  const Shape s = items.front()->shape();
  Tensor out({items.size(), s.c, s.h, s.w});
  for (std::size_t i = 0; i < items.size(); ++i)
    std::copy_n(items[i]->data(), s.sample(), out.data() + i * s.sample());
  return out;
}

Tensor gray_of(const Tensor& visible) {
  return visible.shape().c == 3 ? to_grayscale(visible) : visible;
}

struct Batch {
  Var visible, infrared, mask;
};

Batch make_batch(const std::vector<Tensor>& gray, const std::vector<AnnotatedPair>& data,
                 std::span<const std::size_t> idx) {
  std::vector<const Tensor*> v, i, m;
  for (std::size_t k : idx) {
    v.push_back(&gray[k]);
    i.push_back(&data[k].infrared);
    m.push_back(&data[k].mask);
  }
  return {Var::constant(stack(v)), Var::constant(stack(i)), Var::constant(stack(m))};
}

void accumulate(std::vector<double>& into, const GateDecision& d) {
  if (into.empty()) into.assign(d.experts, 0.0);
  for (std::size_t e = 0; e < d.experts; ++e) into[e] += d.importance[e];
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t steps_per_epoch(std::size_t pairs, std::size_t batch_size) {
  require(pairs > 0 && batch_size > 0, ErrorCode::kInvalidArgument,
          "steps_per_epoch: empty dataset or zero batch size");
  return (pairs + batch_size - 1) / batch_size;
}

std::uint64_t total_steps(const FusionConfig& config, std::size_t pairs) {
  if (config.steps != 0) return config.steps;
  return config.epochs * steps_per_epoch(pairs, config.batch_size);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t count) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 2000 + epoch));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

TrainResult train(FusionModel& model, const std::vector<AnnotatedPair>& data,
                  std::uint64_t start_step, const TrainOptions& options) {
  const FusionConfig& cfg = model.config();
  require(!data.empty(), ErrorCode::kInvalidArgument, "train: dataset is empty");
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Shape s = data[k].infrared.shape();
    require(s.h == cfg.height && s.w == cfg.width, ErrorCode::kResolution,
            "train: pair " + std::to_string(k) + " is " + std::to_string(s.h) + "x" +
                std::to_string(s.w) + ", configured resolution is " + std::to_string(cfg.height) +
                "x" + std::to_string(cfg.width));
  }
  std::vector<Tensor> gray;
  gray.reserve(data.size());
  for (const auto& p : data) gray.push_back(gray_of(p.visible_rgb));

  const std::uint64_t per_epoch = steps_per_epoch(data.size(), cfg.batch_size);
  const std::uint64_t last = total_steps(cfg, data.size());
  const LossConfig loss_cfg{cfg.alpha, cfg.load_weight};
  const AdamOptions adam{cfg.learning_rate, 0.9, 0.999, 1e-8};

  TrainResult result;
  result.final_step = start_step;
  EpochImportance current;
  std::vector<std::size_t> order;
  std::uint64_t order_epoch = ~std::uint64_t{0};

  for (std::uint64_t step = start_step; step < last; ++step) {
    const std::uint64_t epoch = step / per_epoch, pos = step % per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(cfg.seed, epoch, data.size());
      order_epoch = epoch;
      current = EpochImportance{epoch, {}, {}};
    }
    const std::size_t lo = pos * cfg.batch_size;
    const std::size_t hi = std::min(data.size(), lo + cfg.batch_size);
    const Batch batch = make_batch(gray, data, std::span(order).subspan(lo, hi - lo));

    model.params().zero_grad();
    const FusionOutput out = model.forward(batch.visible, batch.infrared, BatchNormMode::kTrain);
    LossInputs in{out.fused, batch.visible, batch.infrared, batch.mask, Var(), Var()};
    if (out.local) in.importance_local = importance(out.local->gates);
    if (out.global) in.importance_global = importance(out.global->gates);
    const LossBreakdown loss = total_loss(loss_cfg, in);
    if (const std::string bad = first_nonfinite_term(loss); !bad.empty())
      fail(ErrorCode::kNumeric, "non-finite loss at step " + std::to_string(step) + ": " + bad);

    loss.total_var.backward();
    model.params().populate_missing_grads();
    model.params().adam_step(adam);

    if (out.local) accumulate(current.local, out.local->decision);
    if (out.global) accumulate(current.global, out.global->decision);
    const StepRecord rec{step, loss.pixel_fg, loss.pixel_bg, loss.grad,
                         loss.load_local, loss.load_global, loss.total};
    result.steps.push_back(rec);
    result.final_step = step + 1;
    if (options.on_step) options.on_step(rec);
    if (pos + 1 == per_epoch || step + 1 == last) result.epochs.push_back(current);
  }
  return result;
}

std::string format_train_log(const FusionConfig& config, const std::vector<StepRecord>& steps) {
  std::string out = "# config: " + config.summary() + "\n";
  out += "step,pixel_fg,pixel_bg,grad,load_local,load_global,total\n";
  for (const auto& s : steps) {
    out += std::to_string(s.step) + "," + fmt(s.pixel_fg) + "," + fmt(s.pixel_bg) + "," +
           fmt(s.grad) + "," + fmt(s.load_local) + "," + fmt(s.load_global) + "," +
           fmt(s.total) + "\n";
  }
  return out;
}

std::string format_importance_log(const FusionConfig& config,
                                  const std::vector<EpochImportance>& epochs) {
  std::string out = "# config: " + config.summary() + "\n";
  out += "epoch,gate";
  for (std::size_t e = 0; e < config.num_experts; ++e) out += ",expert" + std::to_string(e);
  out += "\n";
  auto row = [&](std::uint64_t epoch, const char* gate, const std::vector<double>& v) {
    if (v.empty()) return;
    out += std::to_string(epoch) + "," + gate;
    for (double x : v) out += "," + fmt(x);
    out += "\n";
  };
  for (const auto& e : epochs) {
    row(e.epoch, "mole", e.local);
    row(e.epoch, "moge", e.global);
  }
  return out;
}

Tensor fuse_image(FusionModel& model, const Tensor& visible, const Tensor& infrared) {
  require(visible.shape().c == 1 || visible.shape().c == 3, ErrorCode::kShape,
          "fuse: visible image must have 1 or 3 channels");
  require(infrared.shape().c == 1, ErrorCode::kShape, "fuse: infrared image must have 1 channel");
  NoGradGuard guard;
  const FusionOutput out = model.forward(Var::constant(gray_of(visible)),
                                         Var::constant(infrared), BatchNormMode::kEval);
  Tensor fused = out.fused.value();
  for (std::size_t i = 0; i < fused.size(); ++i) fused[i] = std::clamp(fused[i], 0.0, 1.0);
  return fused;
}

}  // namespace moefusion
