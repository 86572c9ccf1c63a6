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

#include "moefusion/fusion_net.hpp"
#include "moefusion/imageio.hpp"
#include "moefusion/losses.hpp"

namespace moefusion {

struct StepRecord {
  std::uint64_t step = 0;  // 0-based optimizer step index
  double pixel_fg = 0.0;
  double pixel_bg = 0.0;
  double grad = 0.0;
  double load_local = 0.0;
  double load_global = 0.0;
  double total = 0.0;
};

// Importance summed over every step of one epoch; empty vectors for gates the
// variant does not have.
struct EpochImportance {
  std::uint64_t epoch = 0;
  std::vector<double> local;
  std::vector<double> global;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochImportance> epochs;
  std::uint64_t final_step = 0;
};

struct TrainOptions {
  // Called after every optimizer step.
  std::function<void(const StepRecord&)> on_step;
};

// Number of optimizer steps per pass over `pairs` examples.
std::uint64_t steps_per_epoch(std::size_t pairs, std::size_t batch_size);
// config.steps if nonzero, otherwise epochs * steps_per_epoch.
std::uint64_t total_steps(const FusionConfig& config, std::size_t pairs);

// Example order for one epoch; a pure function of (seed, epoch, count).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t count);

// Minibatch Adam on total_loss from `start_step` up to total_steps(). The
// model must already hold the state reached after `start_step` steps.
// Throws ErrorCode::kNumeric naming the step and term on a non-finite loss.
TrainResult train(FusionModel& model, const std::vector<AnnotatedPair>& data,
                  std::uint64_t start_step = 0, const TrainOptions& options = {});

std::string format_train_log(const FusionConfig& config, const std::vector<StepRecord>& steps);
std::string format_importance_log(const FusionConfig& config,
                                  const std::vector<EpochImportance>& epochs);

// Eval-mode forward pass clamped to [0, 1]. visible may be RGB or gray;
// returns (1, 1, H, W).
Tensor fuse_image(FusionModel& model, const Tensor& visible, const Tensor& infrared);

}  // namespace moefusion
