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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moefusion/config.hpp"
#include "moefusion/gating.hpp"
#include "moefusion/ops.hpp"
#include "moefusion/optim.hpp"
#include "moefusion/rng.hpp"

namespace moefusion {

inline constexpr std::size_t kEncoderChannels = 16;
inline constexpr std::size_t kDenseChannels = 64;
inline constexpr std::size_t kLocalHidden = 32;
inline constexpr std::size_t kLocalChannels = 64;
inline constexpr std::size_t kAttentionHidden = 16;

struct ConvLayer {
  Var weight;
  Var bias;

  Var operator()(const Var& x) const { return conv2d(x, weight, bias); }
};

// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
ConvLayer make_conv(ParameterStore& store, const std::string& name, std::size_t in_ch,
                    std::size_t out_ch, std::size_t kernel, Rng& rng);

struct BatchNormLayer {
  Var gamma;
  Var beta;
  BatchNormStats stats;
};

BatchNormLayer make_batchnorm(ParameterStore& store, const std::string& name, std::size_t ch);

struct EncoderOutput {
  Var enc;    // DC3 feature map, 16 channels
  Var dense;  // concat(C1, DC1, DC2, DC3), 64 channels
};

// C1 followed by three densely connected 3x3 convolutions, ReLU after each.
struct Encoder {
  ConvLayer c1, dc1, dc2, dc3;

  EncoderOutput operator()(const Var& image) const;
};

struct EncodedPair {
  EncoderOutput visible;
  EncoderOutput infrared;
};

struct AttentionMaps {
  Var att_v;
  Var att_i;
  Var att;
};

// Conv1x1-BN-ReLU then Conv1x1-BN-Sigmoid.
struct AttentionBranch {
  ConvLayer conv1, conv2;
  BatchNormLayer bn1, bn2;
};

struct AttentionModule {
  AttentionBranch visible, infrared;
  ConvLayer merge1;  // 3x3, 2 -> 4
  ConvLayer merge2;  // 3x3, 4 -> 2
};

// conv3x3(16 -> 32), ReLU, conv3x3(32 -> 64)
struct LocalExpert {
  ConvLayer conv1, conv2;

  Var operator()(const Var& x) const;
};

// 4 convs 3x3: in -> 64 -> 32 -> 16 -> 1, ReLU between, linear output.
struct GlobalExpert {
  ConvLayer conv1, conv2, conv3, conv4;

  Var operator()(const Var& x) const;
};

struct MoleOutput {
  Var y_local;
  Routing routing;
};

struct MogeOutput {
  Var fused;
  std::optional<Routing> routing;  // absent for the fixed-decoder variant
};

struct FusionOutput {
  Var fused;  // raw, unclamped, (batch, 1, H, W)
  AttentionMaps attention;
  std::optional<Routing> local;
  std::optional<Routing> global;
  Var x_f;
};

// The full fusion graph. Parameters live in `params()`; batch-norm running
// statistics are exposed as named buffers.
class FusionModel {
 public:
  explicit FusionModel(const FusionConfig& config);

  const FusionConfig& config() const { return config_; }
  // Only the training schedule may change after construction (e.g. when
  // resuming with a longer run).
  void set_schedule(std::size_t epochs, std::size_t steps);
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  std::size_t global_feature_channels() const;

  EncodedPair encode(const Var& visible_gray, const Var& infrared) const;
  AttentionMaps attention(const Var& enc_v, const Var& enc_i, BatchNormMode mode);
  MoleOutput mole_forward(const Var& enc_v, const Var& enc_i, const Var& att) const;
  MogeOutput moge_forward(const Var& x_f) const;

  // Inputs: (batch, 1, H, W) at the configured resolution.
  FusionOutput forward(const Var& visible_gray, const Var& infrared, BatchNormMode mode);

  // Batch-norm running statistics by name ("<layer>.running_mean" / ".running_var").
  std::map<std::string, Tensor*> buffers();
  std::map<std::string, const Tensor*> buffers() const;

  const Encoder& visible_encoder() const { return enc_v_; }
  const Encoder& infrared_encoder() const { return enc_i_; }
  const std::vector<LocalExpert>& local_experts() const { return local_experts_; }
  const std::vector<GlobalExpert>& global_experts() const { return global_experts_; }
  const GateLayer& local_gate() const { return local_gate_; }
  const GateLayer& global_gate() const { return global_gate_; }

 private:
  Var branch(AttentionBranch& b, const Var& x, BatchNormMode mode);

  FusionConfig config_;
  ParameterStore params_;
  Encoder enc_v_, enc_i_;
  AttentionModule attention_;
  GateLayer local_gate_;
  std::vector<LocalExpert> local_experts_;
  GateLayer global_gate_;
  std::vector<GlobalExpert> global_experts_;
  GlobalExpert decoder_;
};

}  // namespace moefusion
