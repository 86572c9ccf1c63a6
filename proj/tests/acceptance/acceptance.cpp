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

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [criterion numbers...]
//
// With no arguments every criterion runs. Exit status is 0 only when all
// selected criteria pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moefusion/audit.hpp"
#include "moefusion/gating.hpp"
#include "moefusion/imageio.hpp"
#include "moefusion/losses.hpp"
#include "moefusion/metrics.hpp"
#include "moefusion/ops.hpp"
#include "moefusion/synth.hpp"
#include "moefusion/training.hpp"
#include "support/naive_metrics.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
namespace mf = moefusion;
using mf::Tensor;
using mf::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed sub-check; the first few reasons are kept.
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || failures < 5) detail << " [failed: " << what << "]";
    pass = false;
    ++failures;
  }
  int failures = 0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<mf::AnnotatedPair> corpus(const mf::FusionConfig& cfg) {
  std::vector<mf::AnnotatedPair> data;
  for (auto& s : mf::synth_corpus(cfg.train_pairs, cfg.seed, cfg.height, cfg.width))
    data.push_back(std::move(s.pair));
  return data;
}

struct TrainedRun {
  mf::FusionConfig config;
  std::optional<mf::FusionModel> model;
  mf::TrainResult result;
  double seconds = 0.0;
  std::string error;
};

TrainedRun train_run(mf::FusionConfig cfg) {
  TrainedRun run;
  run.config = cfg;
  const auto t0 = Clock::now();
  try {
    run.model.emplace(cfg);
    run.result = mf::train(*run.model, corpus(cfg));
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

mf::FusionConfig desk_config(std::uint64_t seed) {
  mf::FusionConfig cfg;  // N=4, K=2, alpha=10, lr=1e-4, batch 4, 8 pairs, 64x64
  cfg.steps = 200;
  cfg.seed = seed;
  return cfg;
}

// Trained once and shared by criteria 3, 6 and 7.
TrainedRun& desk_run() {
  static TrainedRun run = train_run(desk_config(0));
  return run;
}

// ---------------------------------------------------------------------------

void criterion_gradient_audit(Outcome& out) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& module : mf::audit_modules()) {
      const mf::AuditReport rep = mf::run_audit(module, seed);
      for (const auto& c : rep.cases) {
        ++cases;
        out.require(c.passed(), module + "/" + c.name + " seed " + std::to_string(seed) +
                                    " rel " + fmt(c.rel_error));
        const double scaled = c.rel_error / c.threshold;
        if (scaled > worst) {
          worst = scaled;
          worst_name = module + "/" + c.name;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  out.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  out.detail << cases << " cases over 20 seeds, worst " << worst_name << " at " << fmt(worst)
             << " of its threshold, " << fmt(secs) << " s";
}

std::vector<std::size_t> brute_top_k(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void criterion_gating(Outcome& out) {
  std::mt19937_64 gen(2718);
  std::uniform_int_distribution<int> level(-6, 6);
  std::uniform_int_distribution<int> shift_level(-40, 40);
  std::size_t calls = 0;
  double worst_sum = 0.0;
  for (std::size_t n : {2u, 4u, 6u, 8u}) {
    for (std::size_t k = 1; k <= n; ++k) {
      for (int rep = 0; rep < 51; ++rep, ++calls) {
        // Dyadic logits: frequent ties and exactly representable shifts.
        std::vector<double> row(n);
        for (double& x : row) x = level(gen) / 4.0;
        const double s = shift_level(gen) / 8.0;
        std::vector<double> shifted = row;
        for (double& x : shifted) x += s;
        const auto r = mf::route_logits(Var::constant(Tensor({1, n, 1, 1}, row)), k);
        const auto rs = mf::route_logits(Var::constant(Tensor({1, n, 1, 1}, shifted)), k);
        const std::string where = "N=" + std::to_string(n) + " K=" + std::to_string(k);
        out.require(r.decision.dense.vector() == rs.decision.dense.vector(),
                    "shift invariance " + where);
        std::vector<std::size_t> nonzero;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double g = r.decision.dense[i];
          if (g != 0.0) nonzero.push_back(i);
          out.require(g >= 0.0, "negative weight " + where);
          sum += g;
        }
        out.require(nonzero.size() == k, "nonzero count " + where);
        out.require(nonzero == brute_top_k(row, k), "top-k selection " + where);
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        out.require(std::abs(sum - 1.0) <= 1e-12, "weight sum " + where);
      }
    }
  }
  out.require(calls >= 1000, "only " + std::to_string(calls) + " calls");
  out.detail << calls << " routing calls, max |sum - 1| = " << fmt(worst_sum);
}

double ratio_max_min(const std::vector<double>& v) {
  // An expert that never fires has importance 0; the floor keeps the ratio finite.
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / std::max(*lo, mf::kCvMeanFloor);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return "(" + s + ")";
}

void criterion_load_balancing(Outcome& out) {
  std::mt19937_64 gen(6);
  mf::ParameterStore store;
  Var logits = store.add("logits", oracle::random_tensor(gen, {16, 4, 1, 1}, -2.0, 2.0));
  auto objective = [&] { return mf::cv_squared(mf::importance(mf::route_logits(logits, 2).gates)); };
  double initial = 0.0;
  {
    mf::NoGradGuard guard;
    initial = objective().value().item();
  }
  mf::AdamOptions opt;
  opt.lr = 0.05;
  for (int step = 0; step < 500; ++step) {
    objective().backward();
    store.adam_step(opt);
  }
  double final_value = 0.0;
  {
    mf::NoGradGuard guard;
    final_value = objective().value().item();
  }
  out.require(initial > 0.0 && final_value <= 0.1 * initial, "cv^2 reduction");
  out.detail << "cv^2 " << fmt(initial) << " -> " << fmt(final_value) << " in 500 steps";

  TrainedRun& with_load = desk_run();
  mf::FusionConfig cfg = desk_config(0);
  cfg.load_weight = 0.0;
  TrainedRun without = train_run(cfg);
  out.require(with_load.error.empty(), "default run: " + with_load.error);
  out.require(without.error.empty(), "load_weight=0 run: " + without.error);
  if (!with_load.error.empty() || !without.error.empty()) return;
  const auto& a = with_load.result.epochs.back().global;
  const auto& b = without.result.epochs.back().global;
  const double ra = ratio_max_min(a), rb = ratio_max_min(b);
  out.require(ra <= 5.0 * rb, "importance ratio");
  out.detail << "; MoGE epoch-end importance default " << join(a) << " ratio " << fmt(ra)
             << ", load_weight=0 " << join(b) << " ratio " << fmt(rb);
}

Var random_image(std::mt19937_64& gen, std::size_t n) {
  return Var::constant(oracle::random_tensor(gen, {2, 1, n, n}, 0.0, 1.0));
}

Var random_mask(std::mt19937_64& gen, std::size_t n) {
  Tensor m({2, 1, n, n});
  std::bernoulli_distribution d(0.4);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = d(gen) ? 1.0 : 0.0;
  return Var::constant(m);
}

void criterion_loss_identities(Outcome& out) {
  const std::size_t n = 16;
  double worst = 0.0;
  auto check = [&](double v, const std::string& what) {
    worst = std::max(worst, std::abs(v));
    out.require(std::abs(v) <= 1e-12, what + " = " + fmt(v));
  };
  const Var uniform = Var::constant(Tensor({1, 4, 1, 1}, 2.0));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(seed);
    const Var v = random_image(gen, n), i = random_image(gen, n), m = random_mask(gen, n);
    check(mf::pixel_loss_fg(mf::max_elementwise(v, i), v, i, m).value().item(), "fg-max target");
    check(mf::pixel_loss_bg(mf::mean_elementwise(v, i), v, i, m).value().item(), "bg-mean target");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto flat = [&](double c) { return Var::constant(Tensor({2, 1, n, n}, c)); };
    check(mf::gradient_loss(flat(u(gen)), flat(u(gen)), flat(u(gen))).value().item(),
          "constant-image gradient loss");
    check(mf::load_loss(uniform, uniform).value().item(), "uniform-importance load loss");

    const double lo = 0.5 * u(gen), hi = lo + 0.5 * u(gen);
    const auto b = mf::total_loss({}, {flat(hi), flat(lo), flat(hi), flat(1.0), uniform, uniform});
    check(b.total, "composite zero");
  }
  out.detail << "10 seeds x 5 identities, max |value| = " << fmt(worst);
}

void criterion_metric_oracles(Outcome& out) {
  double worst = 0.0;
  std::size_t triples = 0;
  auto near = [&](double a, double b, double tol, const std::string& what) {
    worst = std::max(worst, std::abs(a - b));
    out.require(std::abs(a - b) <= tol, what + " " + fmt(a) + " vs " + fmt(b));
  };
  for (const auto& t : naive_inputs::random_triples(31337)) {
    ++triples;
    near(mf::entropy(t.f), naive::entropy(t.f), 1e-9, "EN");
    near(mf::spatial_frequency(t.f), naive::spatial_frequency(t.f), 1e-9, "SF");
    near(mf::std_dev(t.f), naive::std_dev(t.f), 1e-9, "SD");
    near(mf::mutual_information(t.a, t.b, t.f), naive::mutual_information(t.a, t.b, t.f), 1e-9, "MI");
    near(mf::avg_gradient(t.f), naive::avg_gradient(t.f), 1e-9, "AG");
    near(mf::scd(t.a, t.b, t.f), naive::scd(t.a, t.b, t.f), 1e-9, "SCD");
    near(mf::qabf(t.a, t.b, t.f), naive::qabf(t.a, t.b, t.f), 1e-9, "Qabf");
    near(mf::vif(t.a, t.b, t.f), naive::vif(t.a, t.b, t.f), 1e-9, "VIF");
    const double q = mf::qabf(t.a, t.b, t.f);
    out.require(q >= 0.0 && q <= 1.0, "Qabf range " + fmt(q));
  }
  const double oracle_worst = worst;

  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 10; ++rep) {
    const GrayImage8 a = rep % 2 ? naive_inputs::random_image(gen) : naive_inputs::smooth_image(gen);
    near(mf::mutual_information(a, a, a), 2.0 * mf::entropy(a), 1e-9, "MI(A,A,A) = 2 EN(A)");
    near(mf::vif(a, a, a), 2.0, 1e-9, "vif(A,A,A) = 2");
    const GrayImage8 x = naive_inputs::random_image(gen, 32, 0, 127);
    const GrayImage8 y = naive_inputs::random_image(gen, 32, 0, 127);
    GrayImage8 sum = x;
    for (std::size_t i = 0; i < sum.size(); ++i)
      sum.pixels[i] = static_cast<std::uint8_t>(x.pixels[i] + y.pixels[i]);
    near(mf::scd(x, y, sum), 2.0, 1e-9, "SCD(A,B,A+B) = 2");
  }
  out.require(triples == 50, "triple count");
  out.detail << triples << " random 32x32 triples, max oracle gap " << fmt(oracle_worst)
             << "; anchors on 10 images";
}

void criterion_desk_training(Outcome& out) {
  TrainedRun& run = desk_run();
  out.require(run.error.empty(), "seed 0: " + run.error);
  if (run.error.empty()) {
    const auto& steps = run.result.steps;
    out.require(steps.size() == 200, "step count " + std::to_string(steps.size()));
    double first10 = 0.0;
    for (std::size_t s = 0; s < 10 && s < steps.size(); ++s) first10 += steps[s].total / 10.0;
    const double last = steps.back().total;
    out.require(last <= 0.5 * first10, "final loss " + fmt(last) + " vs first-10 mean " + fmt(first10));
    out.require(run.seconds < 600.0, "runtime " + fmt(run.seconds) + " s");
    out.detail << "seed 0: first-10 mean " << fmt(first10) << ", step 200 " << fmt(last) << ", "
               << fmt(run.seconds) << " s";
  }
  std::size_t finite_seeds = run.error.empty() ? 1 : 0;
  double slowest = run.seconds;
  for (std::uint64_t seed = 1; seed < 10; ++seed) {
    const TrainedRun other = train_run(desk_config(seed));
    bool finite = other.error.empty();
    for (const auto& r : other.result.steps) finite = finite && std::isfinite(r.total);
    out.require(finite, "seed " + std::to_string(seed) + ": " + other.error);
    out.require(other.seconds < 600.0, "seed " + std::to_string(seed) + " runtime");
    finite_seeds += finite;
    slowest = std::max(slowest, other.seconds);
  }
  out.detail << "; " << finite_seeds << "/10 seeds finite over 200 steps, slowest " << fmt(slowest)
             << " s";
}

void criterion_dynamic_fusion(Outcome& out) {
  TrainedRun& run = desk_run();
  out.require(run.error.empty(), "training: " + run.error);
  if (!run.error.empty()) return;
  mf::FusionModel& model = *run.model;
  const std::size_t h = run.config.height, w = run.config.width;
  // Scene seeds far from anything synth_corpus derives for training.
  double sf_fused = 0.0, sf_visible = 0.0, worst_sf = std::numeric_limits<double>::infinity();
  double in_fused = 0.0, in_infrared = 0.0, worst_in = std::numeric_limits<double>::infinity();
  const int scenes = 6;
  for (int k = 0; k < scenes; ++k) {
    const auto vd = mf::synth_pair(mf::SceneKind::kVisibleDominant, 5000 + k, h, w);
    const Tensor fused = mf::fuse_image(model, vd.pair.visible_rgb, vd.pair.infrared);
    const Tensor gray = mf::to_grayscale(vd.pair.visible_rgb);
    const double f = mf::spatial_frequency(mf::quantize_gray(mf::crop(fused, vd.params.lit_region)));
    const double v = mf::spatial_frequency(mf::quantize_gray(mf::crop(gray, vd.params.lit_region)));
    sf_fused += f / scenes;
    sf_visible += v / scenes;
    worst_sf = std::min(worst_sf, f / v);

    const auto id = mf::synth_pair(mf::SceneKind::kInfraredDominant, 6000 + k, h, w);
    const Tensor fused_ir = mf::fuse_image(model, id.pair.visible_rgb, id.pair.infrared);
    double fi = 0.0, ii = 0.0;
    for (std::size_t p = 0; p < fused_ir.size(); ++p) {
      if (id.pair.mask[p] == 0.0) continue;
      fi += fused_ir[p];
      ii += id.pair.infrared[p];
    }
    in_fused += fi;
    in_infrared += ii;
    worst_in = std::min(worst_in, fi / ii);
  }
  const double sf_ratio = sf_fused / sf_visible, in_ratio = in_fused / in_infrared;
  out.require(sf_ratio >= 0.8, "lit-region SF ratio " + fmt(sf_ratio));
  out.require(in_ratio >= 0.8, "foreground intensity ratio " + fmt(in_ratio));
  out.detail << scenes << " held-out scenes per kind: SF(fused)/SF(visible) = " << fmt(sf_ratio)
             << " (worst scene " << fmt(worst_sf) << "), fused/infrared box intensity = "
             << fmt(in_ratio) << " (worst scene " << fmt(worst_in) << ")";
}

void criterion_ablations(Outcome& out) {
  std::map<mf::Variant, Tensor> fused;
  const auto scene = mf::synth_pair(mf::SceneKind::kCoDominant, 7000, 64, 64);
  for (mf::Variant v : {mf::Variant::kFull, mf::Variant::kNoMole, mf::Variant::kNoMoge}) {
    mf::FusionConfig cfg = desk_config(0);
    cfg.steps = 20;
    cfg.variant = v;
    TrainedRun run = train_run(cfg);
    out.require(run.error.empty(), mf::to_string(v) + ": " + run.error);
    if (!run.error.empty()) return;
    out.require(run.result.steps.size() == 20, mf::to_string(v) + " stopped early");
    fused[v] = mf::fuse_image(*run.model, scene.pair.visible_rgb, scene.pair.infrared);
    if (v == mf::Variant::kNoMole)
      out.require(run.model->global_feature_channels() == 128, "no_mole x_f channels");
  }
  auto max_diff = [&](mf::Variant v) {
    double d = 0.0;
    for (std::size_t i = 0; i < fused[v].size(); ++i)
      d = std::max(d, std::abs(fused[v][i] - fused[mf::Variant::kFull][i]));
    return d;
  };
  const double dm = max_diff(mf::Variant::kNoMole), dg = max_diff(mf::Variant::kNoMoge);
  out.require(dm > 0.0, "no_mole output equals full");
  out.require(dg > 0.0, "no_moge output equals full");
  out.detail << "20-step runs, seed 0: max |fused - full| no_mole " << fmt(dm) << ", no_moge "
             << fmt(dg);
}

std::string slurp(const fs::path& p) {
  const auto bytes = mf::read_file_bytes(p.string());
  return {bytes.begin(), bytes.end()};
}

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" MOEFUSION_CLI_PATH "' " + args +
                          " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

void criterion_io(Outcome& out) {
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> byte(0, 255), dim(1, 23);
  std::size_t round_trips = 0;
  for (int rep = 0; rep < 200; ++rep) {
    mf::PnmImage img;
    img.width = dim(gen);
    img.height = dim(gen);
    img.channels = rep % 2 ? 3 : 1;
    img.pixels.resize(img.width * img.height * img.channels);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(gen));
    const auto bytes = mf::encode_pnm(img, rep % 3 ? "" : "round trip");
    const mf::PnmImage back = mf::parse_pnm(bytes);
    out.require(back.pixels == img.pixels && back.width == img.width && back.height == img.height &&
                    back.channels == img.channels,
                "pixel round trip");
    out.require(mf::encode_pnm(back, rep % 3 ? "" : "round trip") == bytes, "byte round trip");
    ++round_trips;
  }

  double worst = 0.0;
  Tensor rgb({1, 3, 16, 16});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    for (std::size_t i = 0; i < rgb.size(); ++i)
      rgb[i] = rep == 0 ? (i % 256) / 255.0 : u(gen);
    const Tensor back = mf::ycbcr_to_rgb(mf::rgb_to_ycbcr(rgb));
    for (std::size_t i = 0; i < rgb.size(); ++i) worst = std::max(worst, std::abs(back[i] - rgb[i]));
  }
  out.require(worst < 1.0 / 255.0, "YCbCr round trip " + fmt(worst));

  const fs::path dir = fs::temp_directory_path() / "moefusion_acceptance_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg = "--set resolution=16 --set train_pairs=4 --set steps=2 --seed 4";
  bool cli_ok = run_cli("synth --out data --count 2 " + cfg, dir) == 0 &&
                run_cli("train --out run --log-every 0 --data data/pairs.txt " + cfg, dir) == 0;
  for (const char* name : {"a", "b"}) {
    const std::string n = name;
    cli_ok = cli_ok &&
             run_cli("fuse --checkpoint run/checkpoint.bin --visible data/vis_000.ppm "
                     "--infrared data/ir_000.pgm --out " + n + ".pgm", dir) == 0 &&
             run_cli("fuse --checkpoint run/checkpoint.bin --visible data/vis_000.ppm "
                     "--infrared data/ir_000.pgm --color --out " + n + ".ppm", dir) == 0;
  }
  const std::string line = "data/vis_000.ppm data/ir_000.pgm a.pgm data/boxes_000.txt\n";
  mf::write_file_bytes((dir / "manifest.txt").string(),
                       std::vector<std::uint8_t>(line.begin(), line.end()));
  cli_ok = cli_ok && run_cli("eval --regions --manifest manifest.txt --out e1.csv", dir) == 0 &&
           run_cli("eval --regions --manifest manifest.txt --out e2.csv", dir) == 0;
  out.require(cli_ok, "CLI invocation failed");
  if (cli_ok) {
    out.require(slurp(dir / "a.pgm") == slurp(dir / "b.pgm"), "fuse gray output differs");
    out.require(slurp(dir / "a.ppm") == slurp(dir / "b.ppm"), "fuse colour output differs");
    out.require(slurp(dir / "e1.csv") == slurp(dir / "e2.csv"), "eval output differs");
  }
  fs::remove_all(dir);
  out.detail << round_trips << " PNM round trips, YCbCr max error " << fmt(worst)
             << ", fuse/eval outputs compared across two CLI runs";
}

struct Criterion {
  int number;
  const char* title;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient audit", criterion_gradient_audit},
      {2, "gating invariants", criterion_gating},
      {3, "load balancing", criterion_load_balancing},
      {4, "loss zero-cases", criterion_loss_identities},
      {5, "metric oracle equivalence", criterion_metric_oracles},
      {6, "desk-scale training", criterion_desk_training},
      {7, "dynamic fusion", criterion_dynamic_fusion},
      {8, "ablation hooks", criterion_ablations},
      {9, "I/O bit-exactness", criterion_io},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    failed += !out.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", c.number,
                c.title, out.detail.str().c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
