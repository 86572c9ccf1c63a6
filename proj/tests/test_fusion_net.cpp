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

#include <gtest/gtest.h>

#include <random>

#include "moefusion/audit.hpp"
#include "moefusion/error.hpp"
#include "moefusion/fusion_net.hpp"
#include "support/oracles.hpp"

namespace mf = moefusion;
using mf::Shape;
using mf::Tensor;
using mf::Var;

namespace {

mf::FusionConfig small_config(std::size_t size = 8) {
  mf::FusionConfig cfg;
  cfg.height = size;
  cfg.width = size;
  cfg.seed = 3;
  return cfg;
}

Var image(std::mt19937_64& gen, std::size_t batch, std::size_t size) {
  return Var::constant(oracle::random_tensor(gen, {batch, 1, size, size}, 0.0, 1.0));
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

void fill_params(mf::FusionModel& m, const std::string& prefix, double v) {
  for (const auto& name : m.params().names())
    if (starts_with(name, prefix)) {
      Var p = m.params().get(name);
      p.mutable_value().fill(v);
    }
}

// Copies every parameter under `from` onto the same-named one under `to`.
void copy_params(mf::FusionModel& m, const std::string& from, const std::string& to) {
  for (const auto& name : m.params().names())
    if (starts_with(name, from)) {
      Var dst = m.params().get(to + name.substr(from.size()));
      dst.mutable_value() = m.params().get(name).value();
    }
}

void randomize_gate(mf::FusionModel& m, const std::string& name, std::mt19937_64& gen) {
  Var w = m.params().get(name);
  w.mutable_value() = oracle::random_tensor(gen, w.shape(), -0.05, 0.05);
}

bool has_nonzero_grad(const mf::FusionModel& m, const std::string& prefix) {
  for (const auto& name : m.params().names()) {
    if (!starts_with(name, prefix)) continue;
    const Var& p = m.params().get(name);
    if (!p.has_grad()) continue;
    for (double g : p.grad().vector())
      if (g != 0.0) return true;
  }
  return false;
}

}  // namespace

TEST(Encoder, ShapesAt64) {
  mf::FusionModel model(small_config(64));
  std::mt19937_64 gen(1);
  const auto enc = model.encode(image(gen, 1, 64), image(gen, 1, 64));
  EXPECT_EQ(enc.visible.enc.shape(), (Shape{1, 16, 64, 64}));
  EXPECT_EQ(enc.visible.dense.shape(), (Shape{1, 64, 64, 64}));
  EXPECT_EQ(enc.infrared.enc.shape(), (Shape{1, 16, 64, 64}));
  EXPECT_EQ(enc.infrared.dense.shape(), (Shape{1, 64, 64, 64}));
}

TEST(Encoder, ZeroWeightsGiveZeroFeatures) {
  mf::FusionModel model(small_config());
  fill_params(model, "enc_", 0.0);
  std::mt19937_64 gen(2);
  const auto enc = model.encode(image(gen, 2, 8), image(gen, 2, 8));
  for (const Var* v : {&enc.visible.enc, &enc.visible.dense, &enc.infrared.enc, &enc.infrared.dense})
    for (double x : v->value().vector()) EXPECT_EQ(x, 0.0);
}

TEST(Encoder, IdenticalEncodersAgreeAndDenseWiring) {
  mf::FusionModel model(small_config());
  copy_params(model, "enc_v.", "enc_i.");
  std::mt19937_64 gen(3);
  Var x = image(gen, 2, 8);
  const auto enc = model.encode(x, x);
  EXPECT_EQ(enc.visible.dense.value().vector(), enc.infrared.dense.value().vector());
  // The dense output's last 16 channels are the DC3 map.
  const Tensor& d = enc.visible.dense.value();
  const Tensor& e = enc.visible.enc.value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t i = 0; i < 64; ++i)
        EXPECT_EQ(d.at(n, 48 + c, i / 8, i % 8), e.at(n, c, i / 8, i % 8));
}

TEST(Encoder, RejectsMismatchedModalities) {
  mf::FusionModel model(small_config());
  EXPECT_THROW(model.encode(Var::constant(Tensor::zeros({1, 1, 8, 8})),
                            Var::constant(Tensor::zeros({1, 1, 8, 9}))),
               mf::Error);
  EXPECT_THROW(model.encode(Var::constant(Tensor::zeros({1, 3, 8, 8})),
                            Var::constant(Tensor::zeros({1, 1, 8, 8}))),
               mf::Error);
}

TEST(Attention, ZeroBranchesGiveOneHalf) {
  mf::FusionModel model(small_config());
  fill_params(model, "att.vis.conv", 0.0);
  fill_params(model, "att.ir.conv", 0.0);
  std::mt19937_64 gen(4);
  const auto enc = model.encode(image(gen, 2, 8), image(gen, 2, 8));
  const auto maps = model.attention(enc.visible.enc, enc.infrared.enc, mf::BatchNormMode::kTrain);
  for (double v : maps.att_v.value().vector()) EXPECT_EQ(v, 0.5);
  for (double v : maps.att_i.value().vector()) EXPECT_EQ(v, 0.5);
}

TEST(Attention, MapsAreOpenUnitIntervalAndSized) {
  mf::FusionModel model(small_config());
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 3; ++rep) {
    Var a = Var::constant(oracle::random_tensor(gen, {3, 16, 8, 8}, -3.0, 3.0));
    Var b = Var::constant(oracle::random_tensor(gen, {3, 16, 8, 8}, -3.0, 3.0));
    const auto maps = model.attention(a, b, mf::BatchNormMode::kTrain);
    for (const Var* m : {&maps.att_v, &maps.att_i, &maps.att}) {
      EXPECT_EQ(m->shape(), (Shape{3, 1, 8, 8}));
      for (double v : m->value().vector()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
  }
  EXPECT_THROW(model.attention(Var::constant(Tensor::zeros({1, 16, 8, 8})),
                               Var::constant(Tensor::zeros({1, 16, 4, 4})),
                               mf::BatchNormMode::kTrain),
               mf::Error);
}

TEST(Mole, ZeroAttentionWithZeroBiasExpertsAnnihilates) {
  mf::FusionModel model(small_config());
  for (const auto& name : model.params().names())
    if (starts_with(name, "mole.expert") && name.find(".bias") != std::string::npos) {
      Var p = model.params().get(name);
      p.mutable_value().fill(0.0);
    }
  std::mt19937_64 gen(7);
  Var a = Var::constant(oracle::random_tensor(gen, {2, 16, 8, 8}));
  const auto out = model.mole_forward(a, a, Var::constant(Tensor::zeros({2, 1, 8, 8})));
  EXPECT_EQ(out.y_local.shape(), (Shape{2, 64, 8, 8}));
  for (double v : out.y_local.value().vector()) EXPECT_EQ(v, 0.0);
}

TEST(Mole, ZeroInitGateUsesVisibleGroup) {
  mf::FusionModel model(small_config());
  std::mt19937_64 gen(8);
  const auto enc = model.encode(image(gen, 3, 8), image(gen, 3, 8));
  const auto maps = model.attention(enc.visible.enc, enc.infrared.enc, mf::BatchNormMode::kTrain);
  const auto out = model.mole_forward(enc.visible.enc, enc.infrared.enc, maps.att);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_EQ(out.routing.decision.dense[b * 4 + i], i < 2 ? 0.5 : 0.0);
}

TEST(Mole, PositiveInputScalingKeepsSelection) {
  mf::FusionModel model(small_config());
  std::mt19937_64 gen(9);
  randomize_gate(model, "mole.gate.weight", gen);
  Var s = Var::constant(oracle::random_tensor(gen, {4, 8 * 8 * 32, 1, 1}));
  const auto base = model.local_gate().route(s);
  for (double c : {0.01, 0.5, 3.0, 100.0}) {
    const auto scaled = model.local_gate().route(mf::mul_scalar(s, c));
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 2; ++i)
        EXPECT_EQ(scaled.decision.selected[b][i].first, base.decision.selected[b][i].first);
  }
}

TEST(Moge, IdenticalExpertsReturnTheSharedOutput) {
  mf::FusionModel model(small_config());
  for (int e = 1; e < 4; ++e) copy_params(model, "moge.expert0.", "moge.expert" + std::to_string(e) + ".");
  std::mt19937_64 gen(10);
  randomize_gate(model, "moge.gate.weight", gen);
  Var x = Var::constant(oracle::random_tensor(gen, {3, 192, 8, 8}, 0.0, 1.0));
  const auto out = model.moge_forward(x);
  const Tensor j = model.global_experts()[0](x).value();
  ASSERT_EQ(out.fused.shape(), (Shape{3, 1, 8, 8}));
  for (std::size_t i = 0; i < j.size(); ++i) EXPECT_NEAR(out.fused.value()[i], j[i], 1e-12);
}

TEST(Moge, TopOneEqualsSelectedExpertExactly) {
  auto cfg = small_config();
  cfg.top_k = 1;
  mf::FusionModel model(cfg);
  std::mt19937_64 gen(11);
  randomize_gate(model, "moge.gate.weight", gen);
  Var x = Var::constant(oracle::random_tensor(gen, {3, 192, 8, 8}, 0.0, 1.0));
  const auto out = model.moge_forward(x);
  ASSERT_TRUE(out.routing.has_value());
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t e = out.routing->decision.selected[b][0].first;
    const std::vector<std::size_t> one{b};
    const Tensor ref = model.global_experts()[e](mf::select_batch(x, one)).value();
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(out.fused.value()[b * 64 + i], ref[i]);
  }
}

TEST(Moge, ChannelMismatchThrows) {
  mf::FusionModel model(small_config());
  EXPECT_THROW(model.moge_forward(Var::constant(Tensor::zeros({1, 128, 8, 8}))), mf::Error);
}

TEST(Forward, ShapesDeterminismAndResolution) {
  mf::FusionModel model(small_config());
  std::mt19937_64 gen(12);
  Var v = image(gen, 2, 8), i = image(gen, 2, 8);
  const auto a = model.forward(v, i, mf::BatchNormMode::kEval);
  const auto b = model.forward(v, i, mf::BatchNormMode::kEval);
  EXPECT_EQ(a.fused.shape(), (Shape{2, 1, 8, 8}));
  EXPECT_EQ(a.x_f.shape().c, 192u);
  EXPECT_EQ(a.fused.value().vector(), b.fused.value().vector());
  ASSERT_TRUE(a.local && a.global);
  for (const auto* r : {&*a.local, &*a.global})
    for (std::size_t s = 0; s < 2; ++s) {
      int nonzero = 0;
      for (std::size_t e = 0; e < 4; ++e) nonzero += r->decision.dense[s * 4 + e] != 0.0;
      EXPECT_EQ(nonzero, 2);
    }
  try {
    model.forward(image(gen, 1, 6), image(gen, 1, 6), mf::BatchNormMode::kEval);
    FAIL() << "expected a resolution error";
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kResolution);
    EXPECT_NE(std::string(e.what()).find("8x8"), std::string::npos) << e.what();
  }
}

TEST(Forward, TwoModelsFromOneSeedAreBitIdentical) {
  mf::FusionModel a(small_config()), b(small_config());
  std::mt19937_64 gen(13);
  Var v = image(gen, 1, 8), i = image(gen, 1, 8);
  EXPECT_EQ(a.forward(v, i, mf::BatchNormMode::kTrain).fused.value().vector(),
            b.forward(v, i, mf::BatchNormMode::kTrain).fused.value().vector());
}

TEST(Forward, AblationChannelCounts) {
  auto cfg = small_config();
  cfg.variant = mf::Variant::kNoMole;
  mf::FusionModel no_mole(cfg);
  std::mt19937_64 gen(14);
  Var v = image(gen, 1, 8), i = image(gen, 1, 8);
  const auto a = no_mole.forward(v, i, mf::BatchNormMode::kEval);
  EXPECT_EQ(a.x_f.shape().c, 128u);
  EXPECT_FALSE(a.local.has_value());
  EXPECT_TRUE(a.global.has_value());

  cfg.variant = mf::Variant::kNoMoge;
  mf::FusionModel no_moge(cfg);
  const auto b = no_moge.forward(v, i, mf::BatchNormMode::kEval);
  EXPECT_EQ(b.x_f.shape().c, 192u);
  EXPECT_TRUE(b.local.has_value());
  EXPECT_FALSE(b.global.has_value());
  EXPECT_EQ(b.fused.shape(), (Shape{1, 1, 8, 8}));
}

TEST(Wiring, ExpertGroupsOnlyReceiveTheirRoutedGradients) {
  for (bool infrared_group : {true, false}) {
    mf::FusionModel model(small_config());
    // Gate inputs are nonnegative after ReLU and attention, so a +/- weight
    // pattern forces the chosen pair.
    Var w = model.params().get("mole.gate.weight");
    Tensor& wt = w.mutable_value();
    for (std::size_t d = 0; d < wt.shape().h; ++d)
      for (std::size_t e = 0; e < 4; ++e)
        wt.at(0, 0, d, e) = ((e >= 2) == infrared_group) ? 1.0 : -1.0;
    std::mt19937_64 gen(15);
    const Tensor zero = Tensor::zeros({2, 1, 8, 8});
    Var v = infrared_group ? Var::constant(zero) : image(gen, 2, 8);
    Var i = infrared_group ? image(gen, 2, 8) : Var::constant(zero);
    const auto enc = model.encode(v, i);
    const auto maps = model.attention(enc.visible.enc, enc.infrared.enc, mf::BatchNormMode::kTrain);
    const auto out = model.mole_forward(enc.visible.enc, enc.infrared.enc, maps.att);
    for (std::size_t b = 0; b < 2; ++b)
      for (const auto& [e, g] : out.routing.decision.selected[b]) EXPECT_EQ(e >= 2, infrared_group);
    const Tensor r = oracle::random_tensor(gen, out.y_local.shape());
    mf::sum_all(mf::mul(out.y_local, Var::constant(r))).backward();
    const std::string used = infrared_group ? "mole.expert2." : "mole.expert0.";
    const std::string other_a = infrared_group ? "mole.expert0." : "mole.expert2.";
    const std::string other_b = infrared_group ? "mole.expert1." : "mole.expert3.";
    EXPECT_TRUE(has_nonzero_grad(model, used));
    EXPECT_FALSE(has_nonzero_grad(model, other_a));
    EXPECT_FALSE(has_nonzero_grad(model, other_b));
  }
}

TEST(Wiring, SwappingModalitiesWithCopiedWeightsSwapsFeatures) {
  mf::FusionModel model(small_config());
  copy_params(model, "enc_v.", "enc_i.");
  copy_params(model, "att.vis.", "att.ir.");
  std::mt19937_64 gen(16);
  Var a = image(gen, 2, 8), b = image(gen, 2, 8);
  const auto e1 = model.encode(a, b);
  const auto e2 = model.encode(b, a);
  EXPECT_EQ(e1.visible.dense.value().vector(), e2.infrared.dense.value().vector());
  EXPECT_EQ(e1.infrared.dense.value().vector(), e2.visible.dense.value().vector());
  const auto m1 = model.attention(e1.visible.enc, e1.infrared.enc, mf::BatchNormMode::kEval);
  const auto m2 = model.attention(e2.visible.enc, e2.infrared.enc, mf::BatchNormMode::kEval);
  EXPECT_EQ(m1.att_v.value().vector(), m2.att_i.value().vector());
  EXPECT_EQ(m1.att_i.value().vector(), m2.att_v.value().vector());
}

TEST(Audit, FusionNetModulePasses) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto report = mf::run_audit("fusion-net", seed);
    for (const auto& c : report.cases)
      EXPECT_TRUE(c.passed()) << "seed " << seed << " " << c.name << " err " << c.rel_error
                              << " skipped " << c.skipped << "/" << c.probes;
    EXPECT_LT(report.worst().rel_error, 1e-3);
  }
}
