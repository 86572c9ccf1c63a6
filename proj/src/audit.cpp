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

#include "moefusion/audit.hpp"

#include <algorithm>
#include <cmath>

#include "moefusion/error.hpp"
#include "moefusion/fusion_net.hpp"
#include "moefusion/gating.hpp"
#include "moefusion/losses.hpp"
#include "moefusion/ops.hpp"
#include "moefusion/rng.hpp"

namespace moefusion {

namespace {

// Smallest distance to a non-differentiable point that a probe may sit at.
constexpr double kKinkMargin = 1e-2;
constexpr std::size_t kProbesPerLeaf = 24;
// Full-network cases are far costlier per evaluation.
constexpr std::size_t kNetworkProbesPerLeaf = 4;
constexpr int kMaxResamples = 1000;

Tensor uniform(Rng& rng, Shape s, double lo, double hi) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Uniform magnitudes in [margin, 1] with random signs.
Tensor away_from_zero(Rng& rng, Shape s) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(kKinkMargin * 5, 1.0);
    t[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

std::vector<std::size_t> probes(Rng& rng, std::size_t n, std::size_t count = kProbesPerLeaf) {
  if (n <= count) return {};
  std::vector<std::size_t> idx{0, n - 1};
  while (idx.size() < count) idx.push_back(rng.below(n));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

GradLeaf leaf(Rng& rng, const std::string& name, Tensor t,
             std::size_t count = kProbesPerLeaf) {
  const std::size_t n = t.size();
  return {name, Var::parameter(std::move(t)), probes(rng, n, count)};
}

// Reduces any output to a scalar through a fixed random weighting, so every
// output element influences the check.
struct Probe {
  std::uint64_t seed;

  Var operator()(const Var& out) const {
    Rng r(seed);
    return sum_all(mul(out, Var::constant(uniform(r, out.shape(), -1.0, 1.0))));
  }
};

Probe make_probe(Rng& rng, Shape) { return {rng.below(std::uint64_t{1} << 62)}; }

// True when every entry is either structurally zero or clear of the kink.
bool clear_of_zero(const Tensor& t, double margin = kKinkMargin) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [&](double v) { return std::fabs(v) < 1e-12 || std::fabs(v) > margin; });
}

Tensor sobel_component(const Tensor& x, bool horizontal) {
  Tensor k({1, 1, 3, 3});
  const double gx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const double gy[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  for (std::size_t i = 0; i < 9; ++i) k[i] = horizontal ? gx[i] : gy[i];
  NoGradGuard guard;
  return conv2d(Var::constant(x), Var::constant(k), Var::constant(Tensor::zeros({1, 1, 1, 1})))
      .value();
}

bool sobel_clear(const Tensor& x) {
  return clear_of_zero(sobel_component(x, true)) && clear_of_zero(sobel_component(x, false));
}

Tensor sobel_value(const Tensor& x) {
  NoGradGuard guard;
  return sobel_magnitude(Var::constant(x)).value();
}

bool gap_clear(const Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::fabs(a[i] - b[i]) < kKinkMargin) return false;
  return true;
}

Tensor max_of(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
  return out;
}

Tensor mean_of(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
  return out;
}

class Auditor {
 public:
  Auditor(std::string module, std::uint64_t seed) : rng_(derive_seed(seed, 7)) {
    report_.module = std::move(module);
    report_.seed = seed;
  }

  Rng& rng() { return rng_; }

  void check(const std::string& name, double threshold, const std::function<Var()>& f,
             std::vector<GradLeaf> leaves, double h = 1e-4) {
    const GradcheckResult g = gradcheck(f, leaves, h);
    report_.cases.push_back({name, g.rel_error, threshold, g.probes, g.skipped});
  }

  AuditReport take() { return std::move(report_); }

 private:
  Rng rng_;
  AuditReport report_;
};

void audit_autodiff(Auditor& a) {
  constexpr double kTol = 1e-4;
  Rng& r = a.rng();

  auto conv_case = [&](const std::string& name, Shape xs, Shape ws) {
    std::vector<GradLeaf> l{leaf(r, "x", uniform(r, xs, -1, 1)), leaf(r, "w", uniform(r, ws, -1, 1)),
                            leaf(r, "b", uniform(r, {1, ws.n, 1, 1}, -1, 1))};
    const Probe p = make_probe(r, {xs.n, ws.n, xs.h, xs.w});
    a.check(name, kTol, [&] { return p(conv2d(l[0].var, l[1].var, l[2].var)); }, l);
  };
  conv_case("conv2d_3x3", {2, 3, 5, 5}, {4, 3, 3, 3});
  conv_case("conv2d_1x1", {2, 3, 4, 4}, {2, 3, 1, 1});
  conv_case("conv2d_3x5", {1, 2, 5, 6}, {2, 2, 3, 5});

  for (const auto mode : {BatchNormMode::kTrain, BatchNormMode::kEval}) {
    const Shape xs{2, 3, 4, 4};
    std::vector<GradLeaf> l{leaf(r, "x", uniform(r, xs, -1, 2)),
                            leaf(r, "gamma", uniform(r, {1, 3, 1, 1}, 0.5, 1.5)),
                            leaf(r, "beta", uniform(r, {1, 3, 1, 1}, -0.5, 0.5))};
    BatchNormStats stats{uniform(r, {1, 3, 1, 1}, -0.2, 0.2), uniform(r, {1, 3, 1, 1}, 0.5, 1.5)};
    const Probe p = make_probe(r, xs);
    a.check(mode == BatchNormMode::kTrain ? "batchnorm2d_train" : "batchnorm2d_eval", kTol,
            [&] {
              BatchNormStats scratch = stats;
              return p(batchnorm2d(l[0].var, l[1].var, l[2].var, scratch, mode));
            },
            l);
  }

  const Shape s{2, 2, 3, 3};
  auto unary_case = [&](const std::string& name, Var (*op)(const Var&), Tensor x) {
    std::vector<GradLeaf> l{leaf(r, "x", std::move(x))};
    const Probe p = make_probe(r, s);
    a.check(name, kTol, [&] { return p(op(l[0].var)); }, l);
  };
  unary_case("relu", relu, away_from_zero(r, s));
  unary_case("sigmoid", sigmoid, uniform(r, s, -3, 3));
  unary_case("tanh", tanh, uniform(r, s, -2, 2));
  unary_case("abs", moefusion::abs, away_from_zero(r, s));
  unary_case("flatten", flatten, uniform(r, s, -1, 1));
  unary_case("one_minus", one_minus, uniform(r, s, -1, 1));

  auto binary_case = [&](const std::string& name, Var (*op)(const Var&, const Var&), Tensor x,
                         Tensor y) {
    std::vector<GradLeaf> l{leaf(r, "a", std::move(x)), leaf(r, "b", std::move(y))};
    const Probe p = make_probe(r, s);
    a.check(name, kTol, [&] { return p(op(l[0].var, l[1].var)); }, l);
  };
  binary_case("add", add, uniform(r, s, -1, 1), uniform(r, s, -1, 1));
  binary_case("sub", sub, uniform(r, s, -1, 1), uniform(r, s, -1, 1));
  binary_case("mul", mul, uniform(r, s, -1, 1), uniform(r, s, -1, 1));
  binary_case("mul_scalar_broadcast", mul, uniform(r, s, -1, 1), uniform(r, {1, 1, 1, 1}, -1, 1));
  binary_case("mean_elementwise", mean_elementwise, uniform(r, s, -1, 1), uniform(r, s, -1, 1));
  {
    Tensor x = uniform(r, s, -1, 1);
    Tensor y = x;
    const Tensor d = away_from_zero(r, s);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += d[i];
    binary_case("max_elementwise", max_elementwise, std::move(x), std::move(y));
  }
  {
    std::vector<GradLeaf> l{leaf(r, "x", uniform(r, s, -1, 1))};
    a.check("affine_scalar", kTol,
            [&] { return sum_all(mul_scalar(add_scalar(l[0].var, 0.3), -1.7)); }, l);
    a.check("mean_all", kTol, [&] { return mean_all(relu(add_scalar(l[0].var, 2.0))); }, l);
  }
  {
    std::vector<GradLeaf> l{leaf(r, "a", uniform(r, {2, 1, 3, 3}, -1, 1)),
                            leaf(r, "b", uniform(r, {2, 3, 3, 3}, -1, 1)),
                            leaf(r, "c", uniform(r, {2, 2, 3, 3}, -1, 1))};
    const Probe p = make_probe(r, {2, 6, 3, 3});
    a.check("concat_channels", kTol,
            [&] {
              const std::vector<Var> parts{l[0].var, l[1].var, l[2].var};
              return p(concat_channels(parts));
            },
            l);
  }
  {
    Tensor x = uniform(r, s, -1, 1);
    Tensor y = x;
    const Tensor d = away_from_zero(r, s);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += d[i];
    std::vector<GradLeaf> l{leaf(r, "a", std::move(x)), leaf(r, "b", std::move(y))};
    a.check("l1_mean", kTol, [&] { return l1_mean(l[0].var, l[1].var); }, l);
  }
  {
    std::vector<GradLeaf> l{leaf(r, "x", uniform(r, {2, 3, 4, 4}, -1, 1)),
                            leaf(r, "map", uniform(r, {2, 1, 4, 4}, 0, 1))};
    const Probe p = make_probe(r, {2, 3, 4, 4});
    a.check("mul_channel_broadcast", kTol,
            [&] { return p(mul_channel_broadcast(l[0].var, l[1].var)); }, l);
  }
  {
    // Channels separated by at least 0.1 at every pixel.
    Tensor x({2, 3, 4, 4});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t px = 0; px < 16; ++px) {
        std::size_t order[3] = {0, 1, 2};
        for (std::size_t i = 3; i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
        for (std::size_t c = 0; c < 3; ++c)
          x[(n * 3 + c) * 16 + px] = 0.2 * static_cast<double>(order[c]) + r.uniform(0, 0.1);
      }
    std::vector<GradLeaf> l{leaf(r, "x", std::move(x))};
    const Probe p = make_probe(r, {2, 1, 4, 4});
    a.check("channel_max", kTol, [&] { return p(channel_max(l[0].var)); }, l);
  }
  {
    Tensor x;
    for (int t = 0; t < kMaxResamples; ++t) {
      x = uniform(r, {2, 1, 6, 6}, 0, 1);
      if (sobel_clear(x)) break;
    }
    std::vector<GradLeaf> l{leaf(r, "x", std::move(x))};
    const Probe p = make_probe(r, {2, 1, 6, 6});
    a.check("sobel_magnitude", kTol, [&] { return p(sobel_magnitude(l[0].var)); }, l);
  }
  {
    std::vector<GradLeaf> l{leaf(r, "s", uniform(r, {3, 5, 1, 1}, -1, 1)),
                            leaf(r, "w", uniform(r, {1, 1, 5, 4}, -1, 1))};
    const Probe p = make_probe(r, {3, 4, 1, 1});
    a.check("linear", kTol, [&] { return p(linear(l[0].var, l[1].var)); }, l);
  }
  {
    std::vector<GradLeaf> l{leaf(r, "x", uniform(r, {4, 3, 1, 1}, -1, 1))};
    const std::vector<std::size_t> pick{3, 0, 2};
    const Probe p = make_probe(r, {1, 3, 1, 1});
    a.check("select_sum_batch", kTol, [&] { return p(sum_batch(select_batch(l[0].var, pick))); },
            l);
  }
}

// Logits with pairwise gaps of at least 0.1 so the top-K set is stable.
Tensor separated_logits(Rng& r, std::size_t batch, std::size_t n) {
  Tensor t({batch, n, 1, 1});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
    for (std::size_t i = 0; i < n; ++i)
      t[b * n + i] = 0.4 * static_cast<double>(order[i]) + r.uniform(0, 0.2) - 1.0;
  }
  return t;
}

void audit_gating(Auditor& a) {
  constexpr double kTol = 1e-4;
  Rng& r = a.rng();
  for (const auto& [n, k] : {std::pair<std::size_t, std::size_t>{4, 1}, {4, 2}, {6, 3}, {4, 4}}) {
    std::vector<GradLeaf> l{leaf(r, "logits", separated_logits(r, 3, n))};
    const Probe p = make_probe(r, {3, n, 1, 1});
    a.check("route_logits_N" + std::to_string(n) + "K" + std::to_string(k), kTol,
            [&] { return p(route_logits(l[0].var, k).gates); }, l);
  }
  {
    // Gate layer: logits s.W with a weight drawn so the selection is stable.
    ParameterStore store;
    GateLayer gate(store, "g", 6, 4, 2);
    Var w = store.get("g.weight");
    Tensor s;
    for (int t = 0; t < kMaxResamples; ++t) {
      w.mutable_value() = uniform(r, {1, 1, 6, 4}, -1, 1);
      s = uniform(r, {3, 6, 1, 1}, -1, 1);
      NoGradGuard guard;
      const Tensor lg = linear(Var::constant(s), Var::constant(w.value())).value();
      bool ok = true;
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = i + 1; j < 4; ++j)
            ok = ok && std::fabs(lg[b * 4 + i] - lg[b * 4 + j]) > 0.05;
      if (ok) break;
    }
    std::vector<GradLeaf> l{leaf(r, "s", s), {"weight", w, {}}};
    const Probe p = make_probe(r, {3, 4, 1, 1});
    a.check("gate_layer_route", kTol, [&] { return p(gate.route(l[0].var).gates); }, l);
  }
  {
    std::vector<GradLeaf> l{leaf(r, "gates", uniform(r, {4, 5, 1, 1}, 0.05, 1.0))};
    a.check("importance_cv_squared", kTol, [&] { return cv_squared(importance(l[0].var)); }, l);
  }
  {
    // Gate over flattened features feeding small convolutional experts.
    const std::size_t batch = 3, n = 4, k = 2;
    Tensor x = uniform(r, {batch, 2, 4, 4}, -1, 1);
    ParameterStore store;
    GateLayer gate(store, "g", 32, n, k);
    Var gw = store.get("g.weight");
    gw.mutable_value() = uniform(r, {1, 1, 32, n}, -0.5, 0.5);
    std::vector<GradLeaf> l{leaf(r, "x", x), {"gate.weight", gw, probes(r, 32 * n)}};
    for (std::size_t e = 0; e < n; ++e) {
      l.push_back(leaf(r, "expert" + std::to_string(e) + ".weight", uniform(r, {1, 2, 3, 3}, -1, 1)));
      l.push_back(leaf(r, "expert" + std::to_string(e) + ".bias", uniform(r, {1, 1, 1, 1}, -1, 1)));
    }
    const Probe p = make_probe(r, {batch, 1, 4, 4});
    a.check("moe_gate_and_experts", kTol,
            [&] {
              const Routing route = gate.route(flatten(l[0].var));
              const auto members = route.decision.members();
              std::vector<Var> outs(n);
              for (std::size_t e = 0; e < n; ++e)
                if (!members[e].empty())
                  outs[e] = conv2d(select_batch(l[0].var, members[e]), l[2 + 2 * e].var,
                                   l[3 + 2 * e].var);
              return p(moe_combine(outs, members, route.gates));
            },
            l);
  }
}

FusionConfig audit_config(std::uint64_t seed) {
  FusionConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.seed = seed;
  return cfg;
}

// Replaces the zero gate weights with random ones so routing depends on the
// input and differs between samples.
void randomize_gates(FusionModel& model, Rng& r) {
  for (const char* name : {"mole.gate.weight", "moge.gate.weight"}) {
    if (!model.params().contains(name)) continue;
    Var w = model.params().get(name);
    const double bound = 3.0 / std::sqrt(static_cast<double>(w.shape().h));
    w.mutable_value() = uniform(r, w.shape(), -bound, bound);
  }
}

std::vector<GradLeaf> parameter_leaves(FusionModel& model, Rng& r, const std::string& prefix) {
  std::vector<GradLeaf> out;
  for (const auto& name : model.params().names())
    if (name.rfind(prefix, 0) == 0) {
      const Var& v = model.params().get(name);
      out.push_back({name, v, probes(r, v.value().size(), kNetworkProbesPerLeaf)});
    }
  return out;
}

void audit_fusion_net(Auditor& a) {
  Rng& r = a.rng();
  const FusionConfig cfg = audit_config(a.rng().below(1u << 30));
  const Shape img{2, 1, cfg.height, cfg.width};

  {
    FusionModel model(cfg);
    std::vector<GradLeaf> l{leaf(r, "visible", uniform(r, img, 0, 1))};
    for (auto& p : parameter_leaves(model, r, "enc_v.")) l.push_back(p);
    const Probe p = make_probe(r, {2, kDenseChannels, cfg.height, cfg.width});
    a.check("encoder", 1e-3, [&] { return p(model.visible_encoder()(l[0].var).dense); }, l, 1e-5);
  }
  {
    FusionModel model(cfg);
    const Shape fs{2, kEncoderChannels, cfg.height, cfg.width};
    std::vector<GradLeaf> l{leaf(r, "enc_v", uniform(r, fs, 0, 1)),
                            leaf(r, "enc_i", uniform(r, fs, 0, 1))};
    for (auto& p : parameter_leaves(model, r, "att.")) l.push_back(p);
    const Probe p = make_probe(r, {2, 1, cfg.height, cfg.width});
    a.check("attention", 1e-4,
            [&] { return p(model.attention(l[0].var, l[1].var, BatchNormMode::kTrain).att); }, l,
            1e-5);
  }
  {
    FusionModel model(cfg);
    randomize_gates(model, r);
    const Shape fs{2, kEncoderChannels, cfg.height, cfg.width};
    std::vector<GradLeaf> l{leaf(r, "enc_v", uniform(r, fs, 0, 1)),
                            leaf(r, "enc_i", uniform(r, fs, 0, 1)),
                            leaf(r, "att", uniform(r, {2, 1, cfg.height, cfg.width}, 0.1, 0.9))};
    for (auto& p : parameter_leaves(model, r, "mole.")) l.push_back(p);
    const Probe p = make_probe(r, {2, kLocalChannels, cfg.height, cfg.width});
    a.check("mole", 1e-3,
            [&] { return p(model.mole_forward(l[0].var, l[1].var, l[2].var).y_local); }, l, 1e-5);
  }
  {
    FusionModel model(cfg);
    randomize_gates(model, r);
    std::vector<GradLeaf> l{
        leaf(r, "x_f", uniform(r, {2, model.global_feature_channels(), cfg.height, cfg.width}, 0, 1))};
    for (auto& p : parameter_leaves(model, r, "moge.")) l.push_back(p);
    const Probe p = make_probe(r, img);
    a.check("moge", 1e-4, [&] { return p(model.moge_forward(l[0].var).fused); }, l, 1e-5);
  }
  {
    FusionModel model(cfg);
    randomize_gates(model, r);
    std::vector<GradLeaf> l{leaf(r, "visible", uniform(r, img, 0, 1)),
                            leaf(r, "infrared", uniform(r, img, 0, 1))};
    for (auto& p : parameter_leaves(model, r, "")) l.push_back(p);
    const Probe p = make_probe(r, img);
    a.check("end_to_end", 1e-3,
            [&] { return p(model.forward(l[0].var, l[1].var, BatchNormMode::kTrain).fused); }, l,
            1e-5);
  }
}

void audit_losses(Auditor& a) {
  constexpr double kTol = 1e-5;
  Rng& r = a.rng();
  const Shape img{2, 1, 8, 8};
  Tensor mask(img);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = r.uniform() < 0.4 ? 1.0 : 0.0;
  const Var m = Var::constant(mask);

  // Sources and fused image clear of every kink of the loss terms.
  Tensor v, ir, f;
  for (int t = 0; t < kMaxResamples; ++t) {
    v = uniform(r, img, 0, 1);
    ir = uniform(r, img, 0, 1);
    f = uniform(r, img, 0, 1);
    if (!gap_clear(v, ir) || !gap_clear(f, max_of(v, ir)) || !gap_clear(f, mean_of(v, ir)))
      continue;
    if (!sobel_clear(v) || !sobel_clear(ir) || !sobel_clear(f)) continue;
    const Tensor sv = sobel_value(v), si = sobel_value(ir), sf = sobel_value(f);
    if (!gap_clear(sv, si) || !gap_clear(sf, max_of(sv, si))) continue;
    break;
  }
  std::vector<GradLeaf> l{leaf(r, "fused", f), leaf(r, "visible", v), leaf(r, "infrared", ir)};
  a.check("pixel_loss_fg", kTol, [&] { return pixel_loss_fg(l[0].var, l[1].var, l[2].var, m); },
          l);
  a.check("pixel_loss_bg", kTol, [&] { return pixel_loss_bg(l[0].var, l[1].var, l[2].var, m); },
          l);
  a.check("gradient_loss", kTol, [&] { return gradient_loss(l[0].var, l[1].var, l[2].var); }, l);

  std::vector<GradLeaf> imp{leaf(r, "importance_local", uniform(r, {1, 4, 1, 1}, 0.1, 2.0)),
                            leaf(r, "importance_global", uniform(r, {1, 4, 1, 1}, 0.1, 2.0))};
  a.check("load_loss", kTol, [&] { return load_loss(imp[0].var, imp[1].var); }, imp);

  std::vector<GradLeaf> all = l;
  all.insert(all.end(), imp.begin(), imp.end());
  const LossConfig cfg{10.0, 0.01};
  a.check("total_loss", kTol,
          [&] {
            return total_loss(cfg, {all[0].var, all[1].var, all[2].var, m, all[3].var, all[4].var})
                .total_var;
          },
          all);
}

}  // namespace

GradcheckResult gradcheck(const std::function<Var()>& objective, std::vector<GradLeaf>& leaves,
                          double h) {
  for (auto& l : leaves) l.var.zero_grad();
  const Var out = objective();
  require(out.shape().numel() == 1, ErrorCode::kInvalidArgument,
          "gradcheck: objective must be scalar");
  out.backward();
  const double center = out.value().item();

  NoGradGuard guard;
  struct Diff {
    double up, down;
  };
  auto evaluate = [&](double& x, double step) {
    const double saved = x;
    x = saved + step;
    const double up = objective().value().item();
    x = saved - step;
    const double down = objective().value().item();
    x = saved;
    return Diff{up, down};
  };

  struct Sample {
    GradLeaf* leaf;
    std::size_t index;
    double analytic, numeric, forward, backward;
  };
  std::vector<Sample> samples;
  double max_num = 0.0;
  for (auto& l : leaves) {
    const Tensor analytic = l.var.has_grad() ? l.var.grad() : Tensor::zeros(l.var.shape());
    std::vector<std::size_t> idx = l.probe;
    if (idx.empty())
      for (std::size_t i = 0; i < analytic.size(); ++i) idx.push_back(i);
    for (std::size_t i : idx) {
      const Diff d = evaluate(l.var.mutable_value()[i], h);
      const double n = (d.up - d.down) / (2.0 * h);
      samples.push_back({&l, i, analytic[i], n, (d.up - center) / h, (center - d.down) / h});
      max_num = std::max(max_num, std::fabs(n));
    }
  }

  // A disagreeing probe is examined for a kink (ReLU, max, abs) inside the
  // step: either the one-sided slopes differ by more than the disagreement, or
  // re-measuring at h/2 moves the estimate by a comparable amount. Such probes
  // are dropped; a genuine gradient error survives both tests.
  GradcheckResult result;
  result.probes = samples.size();
  double max_err = 0.0;
  for (const auto& s : samples) {
    const double err = std::fabs(s.analytic - s.numeric);
    if (err > 1e-6 * max_num) {
      const Diff d = evaluate(s.leaf->var.mutable_value()[s.index], 0.5 * h);
      const double refined = (d.up - d.down) / h;
      if (std::fabs(s.forward - s.backward) > err || std::fabs(refined - s.numeric) > 0.5 * err) {
        ++result.skipped;
        continue;
      }
    }
    max_err = std::max(max_err, err);
  }
  for (auto& l : leaves) l.var.zero_grad();
  result.rel_error = max_err / std::max(max_num, 1e-12);
  return result;
}

bool AuditReport::passed() const {
  return !cases.empty() &&
         std::all_of(cases.begin(), cases.end(), [](const AuditCase& c) { return c.passed(); });
}

const AuditCase& AuditReport::worst() const {
  require(!cases.empty(), ErrorCode::kInternal, "audit report has no cases");
  return *std::max_element(cases.begin(), cases.end(), [](const AuditCase& x, const AuditCase& y) {
    return x.rel_error < y.rel_error;
  });
}

const std::vector<std::string>& audit_modules() {
  static const std::vector<std::string> names{"autodiff-core", "gating", "fusion-net", "losses"};
  return names;
}

bool is_audit_module(const std::string& name) {
  const auto& m = audit_modules();
  return std::find(m.begin(), m.end(), name) != m.end();
}

AuditReport run_audit(const std::string& module, std::uint64_t seed) {
  require(is_audit_module(module), ErrorCode::kInvalidArgument,
          "unknown audit module '" + module + "'");
  Auditor a(module, seed);
  if (module == "autodiff-core") audit_autodiff(a);
  else if (module == "gating") audit_gating(a);
  else if (module == "fusion-net") audit_fusion_net(a);
  else audit_losses(a);
  return a.take();
}

}  // namespace moefusion
