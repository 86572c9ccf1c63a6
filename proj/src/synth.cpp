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

#include "moefusion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "moefusion/error.hpp"
#include "moefusion/rng.hpp"

namespace moefusion {

namespace {

namespace fs = std::filesystem;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

long span_at_least(double frac, std::size_t n, long lo) {
  return std::max<long>(lo, static_cast<long>(std::lround(frac * static_cast<double>(n))));
}

Box random_box(Rng& rng, std::size_t h, std::size_t w, double min_frac, double max_frac) {
  const long bw = std::min<long>(static_cast<long>(w), span_at_least(rng.uniform(min_frac, max_frac), w, 2));
  const long bh = std::min<long>(static_cast<long>(h), span_at_least(rng.uniform(min_frac, max_frac), h, 2));
  const long x0 = static_cast<long>(rng.below(static_cast<std::uint64_t>(w - bw + 1)));
  const long y0 = static_cast<long>(rng.below(static_cast<std::uint64_t>(h - bh + 1)));
  return {x0, y0, x0 + bw, y0 + bh};
}

bool overlaps(const Box& a, const Box& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

bool inside(const Box& b, long y, long x) { return x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1; }

// Up to `count` pairwise-disjoint boxes; always at least one.
std::vector<Box> disjoint_boxes(Rng& rng, std::size_t count, std::size_t h, std::size_t w,
                                double min_frac, double max_frac) {
  std::vector<Box> boxes{random_box(rng, h, w, min_frac, max_frac)};
  for (int attempt = 0; attempt < 64 && boxes.size() < count; ++attempt) {
    const Box b = random_box(rng, h, w, min_frac, max_frac);
    if (std::none_of(boxes.begin(), boxes.end(), [&](const Box& o) { return overlaps(b, o); }))
      boxes.push_back(b);
  }
  return boxes;
}

struct Texture {
  double freq;
  double phase_x, phase_y;
  double angle;

  double operator()(long y, long x) const {
    const double u = std::cos(angle) * x + std::sin(angle) * y;
    const double v = -std::sin(angle) * x + std::cos(angle) * y;
    const double t = std::sin(2 * std::numbers::pi * freq * u + phase_x) *
                     std::sin(2 * std::numbers::pi * freq * v + phase_y);
    return 0.5 + 0.5 * t;
  }
};

Texture random_texture(Rng& rng, double fmin, double fmax) {
  return {rng.uniform(fmin, fmax), rng.uniform(0, 2 * std::numbers::pi),
          rng.uniform(0, 2 * std::numbers::pi), rng.uniform(0, std::numbers::pi)};
}

Tensor colorize(const Tensor& luma, Rng& rng) {
  const Shape s = luma.shape();
  const double tint[3] = {rng.uniform(0.85, 1.0), rng.uniform(0.85, 1.0), rng.uniform(0.75, 1.0)};
  Tensor rgb({1, 3, s.h, s.w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < s.plane(); ++i) rgb[c * s.plane() + i] = clamp01(luma[i] * tint[c]);
  return rgb;
}

SynthScene visible_dominant(Rng& rng, std::size_t h, std::size_t w) {
  SynthScene sc;
  sc.kind = SceneKind::kVisibleDominant;
  const Texture tex = random_texture(rng, 0.15, 0.3);
  const Texture object_tex = random_texture(rng, 0.2, 0.35);
  sc.params.texture_frequency = tex.freq;
  sc.params.illumination = rng.uniform(0.8, 0.95);
  sc.params.lit_region = random_box(rng, h, w, 0.5, 0.75);
  const std::vector<Box> boxes = disjoint_boxes(rng, 1 + rng.below(2), h, w, 0.15, 0.3);
  const double ir_base = rng.uniform(0.25, 0.35);
  const double ir_tilt = rng.uniform(-0.03, 0.03);

  Tensor vis({1, 1, h, w}), ir({1, 1, h, w});
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const bool lit = inside(sc.params.lit_region, y, x);
      const bool obj = std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return inside(b, y, x); });
      const double illum = lit ? sc.params.illumination : 0.35;
      const double t = obj ? object_tex(y, x) : tex(y, x);
      vis[y * w + x] = clamp01(illum * (0.3 + 0.7 * t));
      ir[y * w + x] = clamp01(ir_base + ir_tilt * (static_cast<double>(x) / static_cast<double>(w)));
    }
  sc.pair = make_annotated_pair(colorize(vis, rng), std::move(ir), boxes);
  return sc;
}

SynthScene infrared_dominant(Rng& rng, std::size_t h, std::size_t w) {
  SynthScene sc;
  sc.kind = SceneKind::kInfraredDominant;
  const Texture tex = random_texture(rng, 0.05, 0.15);
  sc.params.texture_frequency = tex.freq;
  sc.params.illumination = rng.uniform(0.08, 0.15);
  sc.params.lit_region = {0, 0, 0, 0};
  sc.params.blobs = disjoint_boxes(rng, 1 + rng.below(3), h, w, 0.15, 0.3);
  const double smoke_angle = rng.uniform(0, 2 * std::numbers::pi);
  const double ir_bg = rng.uniform(0.15, 0.25);

  std::vector<double> heat(sc.params.blobs.size());
  for (auto& v : heat) v = rng.uniform(0.8, 0.95);
  Tensor vis({1, 1, h, w}), ir({1, 1, h, w});
  const double diag = std::hypot(static_cast<double>(h), static_cast<double>(w));
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const double u = (std::cos(smoke_angle) * x + std::sin(smoke_angle) * y) / diag;
      const double smoke = 0.5 + 0.5 * u;
      vis[y * w + x] = clamp01(sc.params.illumination * (0.6 + 0.4 * smoke) + 0.02 * tex(y, x));
      double v = ir_bg + 0.05 * smoke;
      for (std::size_t k = 0; k < sc.params.blobs.size(); ++k) {
        const Box& b = sc.params.blobs[k];
        if (!inside(b, y, x)) continue;
        const double cy = 0.5 * (b.y0 + b.y1 - 1), cx = 0.5 * (b.x0 + b.x1 - 1);
        const double ry = std::max(1.0, 0.5 * (b.y1 - b.y0)), rx = std::max(1.0, 0.5 * (b.x1 - b.x0));
        const double d = std::hypot((y - cy) / ry, (x - cx) / rx);
        v = std::max(v, heat[k] * (1.0 - 0.25 * std::min(d, 1.0)));
      }
      ir[y * w + x] = clamp01(v);
    }
  sc.pair = make_annotated_pair(colorize(vis, rng), std::move(ir), sc.params.blobs);
  return sc;
}

SynthScene co_dominant(Rng& rng, std::size_t h, std::size_t w) {
  SynthScene sc;
  sc.kind = SceneKind::kCoDominant;
  const Texture tex = random_texture(rng, 0.12, 0.28);
  sc.params.texture_frequency = tex.freq;
  sc.params.illumination = rng.uniform(0.6, 0.8);
  sc.params.lit_region = {0, 0, static_cast<long>(w), static_cast<long>(h)};
  sc.params.blobs = disjoint_boxes(rng, 2 + rng.below(2), h, w, 0.12, 0.25);
  const double ir_bg = rng.uniform(0.15, 0.25);
  std::vector<double> heat(sc.params.blobs.size());
  for (auto& v : heat) v = rng.uniform(0.8, 0.95);

  Tensor vis({1, 1, h, w}), ir({1, 1, h, w});
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      vis[y * w + x] = clamp01(sc.params.illumination * (0.3 + 0.7 * tex(y, x)));
      double v = ir_bg;
      for (std::size_t k = 0; k < sc.params.blobs.size(); ++k)
        if (inside(sc.params.blobs[k], y, x)) v = heat[k];
      ir[y * w + x] = v;
    }
  sc.pair = make_annotated_pair(colorize(vis, rng), std::move(ir), sc.params.blobs);
  return sc;
}

std::string indexed(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", prefix, i, ext);
  return buf;
}

}  // namespace

std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::kVisibleDominant: return "visible-dominant";
    case SceneKind::kInfraredDominant: return "infrared-dominant";
    case SceneKind::kCoDominant: return "co-dominant";
  }
  return "visible-dominant";
}

SceneKind parse_scene_kind(const std::string& s) {
  if (s == "visible-dominant") return SceneKind::kVisibleDominant;
  if (s == "infrared-dominant") return SceneKind::kInfraredDominant;
  if (s == "co-dominant") return SceneKind::kCoDominant;
  fail(ErrorCode::kInvalidArgument, "unknown scene kind '" + s + "'");
}

SynthScene synth_pair(SceneKind kind, std::uint64_t seed, std::size_t height, std::size_t width) {
  require(height >= 4 && width >= 4, ErrorCode::kInvalidArgument,
          "synth_pair: resolution must be at least 4x4");
  Rng rng(derive_seed(seed, 100 + static_cast<std::uint64_t>(kind)));
  switch (kind) {
    case SceneKind::kVisibleDominant: return visible_dominant(rng, height, width);
    case SceneKind::kInfraredDominant: return infrared_dominant(rng, height, width);
    case SceneKind::kCoDominant: return co_dominant(rng, height, width);
  }
  fail(ErrorCode::kInvalidArgument, "synth_pair: invalid kind");
}

std::vector<SynthScene> synth_corpus(std::size_t count, std::uint64_t seed, std::size_t height,
                                     std::size_t width) {
  std::vector<SynthScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(synth_pair(static_cast<SceneKind>(i % 3), derive_seed(seed, 1000 + i), height, width));
  return out;
}

void write_corpus(const std::string& dir, const std::vector<SynthScene>& scenes) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create directory '" + dir + "': " + ec.message());
  std::string manifest = "# visible infrared boxes\n";
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto vis = indexed("vis", i, "ppm"), ir = indexed("ir", i, "pgm"),
               boxes = indexed("boxes", i, "txt");
    const std::string tag = "scene " + to_string(scenes[i].kind);
    write_pnm((fs::path(dir) / vis).string(), from_tensor(scenes[i].pair.visible_rgb), tag);
    write_pnm((fs::path(dir) / ir).string(), from_tensor(scenes[i].pair.infrared), tag);
    const std::string text = format_boxes(scenes[i].pair.boxes);
    write_file_bytes((fs::path(dir) / boxes).string(),
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    manifest += vis + " " + ir + " " + boxes + "\n";
  }
  write_file_bytes((fs::path(dir) / "pairs.txt").string(),
                   std::span(reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()));
}

std::vector<AnnotatedPair> read_corpus(const std::string& manifest_path) {
  const auto bytes = read_file_bytes(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).string();
  };
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<AnnotatedPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty()) continue;
    require(cols.size() == 3, ErrorCode::kFormat,
            manifest_path + ": line " + std::to_string(lineno) +
                ": expected 'visible infrared boxes'");
    Tensor vis = to_tensor(read_pnm(resolve(cols[0])));
    if (vis.shape().c == 1) {
      Tensor rgb({1, 3, vis.shape().h, vis.shape().w});
      for (std::size_t c = 0; c < 3; ++c)
        std::copy_n(vis.data(), vis.size(), rgb.data() + c * vis.size());
      vis = std::move(rgb);
    }
    Tensor ir = to_tensor(read_pnm(resolve(cols[1])));
    require(ir.shape().c == 1, ErrorCode::kFormat,
            manifest_path + ": line " + std::to_string(lineno) + ": infrared must be a graymap");
    out.push_back(make_annotated_pair(std::move(vis), std::move(ir), read_boxes(resolve(cols[2]))));
  }
  require(!out.empty(), ErrorCode::kInvalidArgument, manifest_path + ": no pairs listed");
  return out;
}

Tensor crop(const Tensor& image, const Box& box) {
  const Shape s = image.shape();
  require(box.x0 >= 0 && box.y0 >= 0 && box.x0 < box.x1 && box.y0 < box.y1 &&
              box.x1 <= static_cast<long>(s.w) && box.y1 <= static_cast<long>(s.h),
          ErrorCode::kInvalidArgument, "crop: box " + to_string(box) + " outside image");
  const std::size_t ch = static_cast<std::size_t>(box.y1 - box.y0);
  const std::size_t cw = static_cast<std::size_t>(box.x1 - box.x0);
  Tensor out({s.n, s.c, ch, cw});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < ch; ++y)
        for (std::size_t x = 0; x < cw; ++x)
          out.at(n, c, y, x) = image.at(n, c, y + box.y0, x + box.x0);
  return out;
}

}  // namespace moefusion
