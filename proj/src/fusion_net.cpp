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

#include "moefusion/fusion_net.hpp"

#include <cmath>

#include "moefusion/error.hpp"

namespace moefusion {

namespace {

void expect_channels(const Var& v, std::size_t c, const char* what) {
  require(v.shape().c == c, ErrorCode::kInternal,
          std::string(what) + ": expected " + std::to_string(c) + " channels, got " +
              std::to_string(v.shape().c));
}

GlobalExpert make_global_expert(ParameterStore& store, const std::string& name,
                                std::size_t in_ch, Rng& rng) {
  return {make_conv(store, name + ".conv1", in_ch, 64, 3, rng),
          make_conv(store, name + ".conv2", 64, 32, 3, rng),
          make_conv(store, name + ".conv3", 32, 16, 3, rng),
          make_conv(store, name + ".conv4", 16, 1, 3, rng)};
}

AttentionBranch make_branch(ParameterStore& store, const std::string& name, Rng& rng) {
  return {make_conv(store, name + ".conv1", kEncoderChannels, kAttentionHidden, 1, rng),
          make_conv(store, name + ".conv2", kAttentionHidden, 1, 1, rng),
          make_batchnorm(store, name + ".bn1", kAttentionHidden),
          make_batchnorm(store, name + ".bn2", 1)};
}

Encoder make_encoder(ParameterStore& store, const std::string& name, Rng& rng) {
  const std::size_t c = kEncoderChannels;
  return {make_conv(store, name + ".c1", 1, c, 3, rng),
          make_conv(store, name + ".dc1", c, c, 3, rng),
          make_conv(store, name + ".dc2", 2 * c, c, 3, rng),
          make_conv(store, name + ".dc3", 3 * c, c, 3, rng)};
}

}  // namespace

ConvLayer make_conv(ParameterStore& store, const std::string& name, std::size_t in_ch,
                    std::size_t out_ch, std::size_t kernel, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel * kernel));
  Tensor w({out_ch, in_ch, kernel, kernel});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  Tensor b({1, out_ch, 1, 1});
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  return {store.add(name + ".weight", std::move(w)), store.add(name + ".bias", std::move(b))};
}

BatchNormLayer make_batchnorm(ParameterStore& store, const std::string& name, std::size_t ch) {
  return {store.add(name + ".gamma", Tensor::ones({1, ch, 1, 1})),
          store.add(name + ".beta", Tensor::zeros({1, ch, 1, 1})), BatchNormStats::fresh(ch)};
}

EncoderOutput Encoder::operator()(const Var& image) const {
  const Var f1 = relu(c1(image));
  const Var f2 = relu(dc1(f1));
  const std::vector<Var> in3{f1, f2};
  const Var f3 = relu(dc2(concat_channels(in3)));
  const std::vector<Var> in4{f1, f2, f3};
  const Var f4 = relu(dc3(concat_channels(in4)));
  const std::vector<Var> all{f1, f2, f3, f4};
  return {f4, concat_channels(all)};
}

Var LocalExpert::operator()(const Var& x) const { return conv2(relu(conv1(x))); }

Var GlobalExpert::operator()(const Var& x) const {
  return conv4(relu(conv3(relu(conv2(relu(conv1(x)))))));
}

FusionModel::FusionModel(const FusionConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, 1));
  const std::size_t n = config_.num_experts, k = config_.top_k;
  const std::size_t hw = config_.height * config_.width;

  enc_v_ = make_encoder(params_, "enc_v", rng);
  enc_i_ = make_encoder(params_, "enc_i", rng);
  if (config_.variant != Variant::kNoMole) {
    attention_.visible = make_branch(params_, "att.vis", rng);
    attention_.infrared = make_branch(params_, "att.ir", rng);
    attention_.merge1 = make_conv(params_, "att.merge1", 2, 4, 3, rng);
    attention_.merge2 = make_conv(params_, "att.merge2", 4, 2, 3, rng);
    local_gate_ = GateLayer(params_, "mole.gate", hw * 2 * kEncoderChannels, n, k);
    for (std::size_t e = 0; e < n; ++e) {
      const std::string name = "mole.expert" + std::to_string(e);
      local_experts_.push_back({make_conv(params_, name + ".conv1", kEncoderChannels,
                                          kLocalHidden, 3, rng),
                                make_conv(params_, name + ".conv2", kLocalHidden,
                                          kLocalChannels, 3, rng)});
    }
  }
  const std::size_t in_ch = global_feature_channels();
  if (config_.variant == Variant::kNoMoge) {
    decoder_ = make_global_expert(params_, "decoder", in_ch, rng);
  } else {
    global_gate_ = GateLayer(params_, "moge.gate", hw * in_ch, n, k);
    for (std::size_t e = 0; e < n; ++e)
      global_experts_.push_back(
          make_global_expert(params_, "moge.expert" + std::to_string(e), in_ch, rng));
  }
}

void FusionModel::set_schedule(std::size_t epochs, std::size_t steps) {
  FusionConfig next = config_;
  next.epochs = epochs;
  next.steps = steps;
  next.validate();
  config_ = next;
}

std::size_t FusionModel::global_feature_channels() const {
  return config_.variant == Variant::kNoMole ? 2 * kDenseChannels
                                             : kLocalChannels + 2 * kDenseChannels;
}

EncodedPair FusionModel::encode(const Var& visible_gray, const Var& infrared) const {
  const Shape vs = visible_gray.shape(), is = infrared.shape();
  require(vs.c == 1 && is.c == 1, ErrorCode::kShape,
          "encode: inputs must be single-channel, got " + to_string(vs) + " and " +
              to_string(is));
  require(vs == is, ErrorCode::kShape,
          "encode: modality size mismatch " + to_string(vs) + " vs " + to_string(is));
  EncodedPair out{enc_v_(visible_gray), enc_i_(infrared)};
  expect_channels(out.visible.enc, kEncoderChannels, "x_enc^V");
  expect_channels(out.infrared.enc, kEncoderChannels, "x_enc^I");
  expect_channels(out.visible.dense, kDenseChannels, "x_dense^V");
  expect_channels(out.infrared.dense, kDenseChannels, "x_dense^I");
  return out;
}

Var FusionModel::branch(AttentionBranch& b, const Var& x, BatchNormMode mode) {
  const Var h = relu(batchnorm2d(b.conv1(x), b.bn1.gamma, b.bn1.beta, b.bn1.stats, mode));
  return sigmoid(batchnorm2d(b.conv2(h), b.bn2.gamma, b.bn2.beta, b.bn2.stats, mode));
}

AttentionMaps FusionModel::attention(const Var& enc_v, const Var& enc_i, BatchNormMode mode) {
  require(config_.variant != Variant::kNoMole, ErrorCode::kInvalidArgument,
          "attention: the no_mole variant has no attention module");
  require(enc_v.shape() == enc_i.shape(), ErrorCode::kShape,
          "attention: feature shape mismatch " + to_string(enc_v.shape()) + " vs " +
              to_string(enc_i.shape()));
  AttentionMaps maps;
  maps.att_v = branch(attention_.visible, enc_v, mode);
  maps.att_i = branch(attention_.infrared, enc_i, mode);
  const std::vector<Var> both{maps.att_v, maps.att_i};
  const Var merged = attention_.merge2(relu(attention_.merge1(concat_channels(both))));
  maps.att = sigmoid(channel_max(merged));
  return maps;
}

MoleOutput FusionModel::mole_forward(const Var& enc_v, const Var& enc_i, const Var& att) const {
  require(config_.variant != Variant::kNoMole, ErrorCode::kInvalidArgument,
          "mole_forward: the no_mole variant has no local experts");
  require(enc_v.shape() == enc_i.shape(), ErrorCode::kShape,
          "mole_forward: feature shape mismatch");
  Var first, second;
  if (config_.mole_bg_variant) {
    // Foreground / background split over modality-averaged features.
    const Var shared = mean_elementwise(enc_v, enc_i);
    first = mul_channel_broadcast(shared, att);
    second = mul_channel_broadcast(shared, one_minus(att));
  } else {
    first = mul_channel_broadcast(enc_v, att);
    second = mul_channel_broadcast(enc_i, att);
  }
  const std::vector<Var> local{first, second};
  MoleOutput out{Var(), local_gate_.route(flatten(concat_channels(local)))};

  const auto members = out.routing.decision.members();
  const std::size_t half = config_.num_experts / 2;
  std::vector<Var> outputs(config_.num_experts);
  for (std::size_t e = 0; e < config_.num_experts; ++e) {
    if (members[e].empty()) continue;
    const Var& source = e < half ? first : second;
    outputs[e] = local_experts_[e](select_batch(source, members[e]));
  }
  out.y_local = moe_combine(outputs, members, out.routing.gates);
  expect_channels(out.y_local, kLocalChannels, "y_local");
  return out;
}

MogeOutput FusionModel::moge_forward(const Var& x_f) const {
  require(x_f.shape().c == global_feature_channels(), ErrorCode::kShape,
          "moge_forward: expected " + std::to_string(global_feature_channels()) +
              " channels, got " + std::to_string(x_f.shape().c));
  MogeOutput out;
  if (config_.variant == Variant::kNoMoge) {
    out.fused = decoder_(x_f);
  } else {
    out.routing = global_gate_.route(flatten(x_f));
    const auto members = out.routing->decision.members();
    std::vector<Var> outputs(config_.num_experts);
    for (std::size_t e = 0; e < config_.num_experts; ++e) {
      if (members[e].empty()) continue;
      outputs[e] = global_experts_[e](select_batch(x_f, members[e]));
    }
    out.fused = moe_combine(outputs, members, out.routing->gates);
  }
  expect_channels(out.fused, 1, "I_F");
  return out;
}

FusionOutput FusionModel::forward(const Var& visible_gray, const Var& infrared,
                                  BatchNormMode mode) {
  const Shape s = visible_gray.shape();
  require(s.h == config_.height && s.w == config_.width, ErrorCode::kResolution,
          "input resolution " + std::to_string(s.h) + "x" + std::to_string(s.w) +
              " does not match configured " + std::to_string(config_.height) + "x" +
              std::to_string(config_.width));
  const EncodedPair enc = encode(visible_gray, infrared);
  FusionOutput out;
  if (config_.variant == Variant::kNoMole) {
    const std::vector<Var> parts{enc.infrared.dense, enc.visible.dense};
    out.x_f = concat_channels(parts);
  } else {
    out.attention = attention(enc.visible.enc, enc.infrared.enc, mode);
    MoleOutput mole = mole_forward(enc.visible.enc, enc.infrared.enc, out.attention.att);
    out.local = std::move(mole.routing);
    const std::vector<Var> parts{mole.y_local, enc.infrared.dense, enc.visible.dense};
    out.x_f = concat_channels(parts);
  }
  expect_channels(out.x_f, global_feature_channels(), "x_f");
  MogeOutput moge = moge_forward(out.x_f);
  out.fused = moge.fused;
  out.global = std::move(moge.routing);
  return out;
}

std::map<std::string, Tensor*> FusionModel::buffers() {
  std::map<std::string, Tensor*> out;
  if (config_.variant == Variant::kNoMole) return out;
  auto add = [&](const std::string& name, BatchNormLayer& bn) {
    out[name + ".running_mean"] = &bn.stats.running_mean;
    out[name + ".running_var"] = &bn.stats.running_var;
  };
  add("att.vis.bn1", attention_.visible.bn1);
  add("att.vis.bn2", attention_.visible.bn2);
  add("att.ir.bn1", attention_.infrared.bn1);
  add("att.ir.bn2", attention_.infrared.bn2);
  return out;
}

std::map<std::string, const Tensor*> FusionModel::buffers() const {
  std::map<std::string, const Tensor*> out;
  for (auto& [k, v] : const_cast<FusionModel*>(this)->buffers()) out[k] = v;
  return out;
}

}  // namespace moefusion
