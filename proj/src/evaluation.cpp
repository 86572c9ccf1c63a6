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

#include "moefusion/evaluation.hpp"

#include <cstdio>
#include <filesystem>
#include <regex>
#include <sstream>

#include "moefusion/error.hpp"
#include "moefusion/rng.hpp"
#include "moefusion/synth.hpp"
#include "moefusion/training.hpp"

namespace moefusion {

namespace {

namespace fs = std::filesystem;

std::string resolve(const std::string& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() || base.empty() ? path : fs::path(base) / path).string();
}

GrayImage8 load_gray(const std::string& path) {
  Tensor t = to_tensor(read_pnm(path));
  if (t.shape().c == 3) t = to_grayscale(t);
  return quantize_gray(t);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metric_cells(const MetricValues& m) {
  std::string out;
  for (double v : m.as_array()) out += "," + fmt(v);
  return out;
}

}  // namespace

std::vector<EvalEntry> parse_eval_manifest(const std::string& text, const std::string& base_dir) {
  std::vector<EvalEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty()) continue;
    require(cols.size() == 3 || cols.size() == 4, ErrorCode::kFormat,
            "manifest line " + std::to_string(lineno) + ": expected 'visible infrared fused [boxes]', got " +
                std::to_string(cols.size()) + " fields");
    EvalEntry e{lineno, resolve(base_dir, cols[0]), resolve(base_dir, cols[1]),
                resolve(base_dir, cols[2]), std::nullopt};
    if (cols.size() == 4) e.boxes = resolve(base_dir, cols[3]);
    out.push_back(std::move(e));
  }
  require(!out.empty(), ErrorCode::kFormat, "manifest lists no triples");
  return out;
}

EvalTriple load_eval_triple(const EvalEntry& e) {
  EvalTriple t{load_gray(e.visible), load_gray(e.infrared), load_gray(e.fused), Tensor()};
  require(t.visible.width == t.infrared.width && t.visible.height == t.infrared.height &&
              t.visible.width == t.fused.width && t.visible.height == t.fused.height,
          ErrorCode::kFormat,
          "image sizes differ: visible " + std::to_string(t.visible.width) + "x" +
              std::to_string(t.visible.height) + ", infrared " + std::to_string(t.infrared.width) +
              "x" + std::to_string(t.infrared.height) + ", fused " +
              std::to_string(t.fused.width) + "x" + std::to_string(t.fused.height));
  if (e.boxes) t.mask = mask_from_boxes(read_boxes(*e.boxes), t.visible.height, t.visible.width);
  return t;
}

std::vector<MetricReport> evaluate_manifest(const std::string& manifest_path, bool regions) {
  const auto bytes = read_file_bytes(manifest_path);
  const auto entries = parse_eval_manifest(std::string(bytes.begin(), bytes.end()),
                                           fs::path(manifest_path).parent_path().string());
  std::vector<MetricReport> rows;
  for (const auto& e : entries) {
    try {
      require(!regions || e.boxes.has_value(), ErrorCode::kFormat,
              "region metrics need a boxes column");
      const EvalTriple t = load_eval_triple(e);
      const std::string name = fs::path(e.fused).filename().string();
      rows.push_back({name, Region::kFull, compute_metrics(t.visible, t.infrared, t.fused)});
      if (regions) {
        const auto [fg, bg] = masked_metrics(t.visible, t.infrared, t.fused, t.mask);
        rows.push_back({name, Region::kForeground, fg});
        rows.push_back({name, Region::kBackground, bg});
      }
    } catch (const Error& err) {
      throw Error(err.code(), manifest_path + " line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  return rows;
}

std::string format_metric_csv(const std::vector<MetricReport>& rows, const std::string& header) {
  std::string out;
  std::istringstream h(header);
  for (std::string line; std::getline(h, line);) out += "# " + line + "\n";
  out += "pair,region";
  for (const char* n : kMetricNames) out += std::string(",") + n;
  out += "\n";
  for (const auto& r : rows) out += csv_field(r.pair) + "," + to_string(r.region) + metric_cells(r.values) + "\n";
  for (const Region region : {Region::kFull, Region::kForeground, Region::kBackground}) {
    std::vector<MetricValues> vals;
    for (const auto& r : rows)
      if (r.region == region) vals.push_back(r.values);
    if (!vals.empty()) out += "mean," + to_string(region) + metric_cells(aggregate(vals)) + "\n";
  }
  return out;
}

SweepGrid parse_sweep_grid(const std::string& text) {
  static const std::regex item(R"(\s*E(\d+)K(\d+)\s*)");
  SweepGrid grid;
  std::istringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');) {
    std::smatch m;
    if (!std::regex_match(tok, m, item)) {
      grid.warnings.push_back("skipping malformed grid entry '" + tok + "'");
      continue;
    }
    const std::size_t n = std::stoul(m[1]), k = std::stoul(m[2]);
    const std::string label = "E" + std::to_string(n) + "K" + std::to_string(k);
    if (k == 0 || k > n || n % 2 != 0) {
      grid.warnings.push_back("skipping " + label + ": need 1 <= K <= N and even N");
      continue;
    }
    grid.settings.push_back({n, k, label});
  }
  return grid;
}

std::vector<AnnotatedPair> held_out_pairs(const FusionConfig& config, std::size_t count) {
  std::vector<AnnotatedPair> out;
  for (auto& s : synth_corpus(count, derive_seed(config.seed, 77), config.height, config.width))
    out.push_back(std::move(s.pair));
  return out;
}

SweepRow run_sweep_setting(const FusionConfig& base, const ExpertSetting& setting) {
  FusionConfig cfg = base;
  cfg.num_experts = setting.experts;
  cfg.top_k = setting.top_k;
  cfg.validate();
  std::vector<AnnotatedPair> data;
  for (auto& s : synth_corpus(cfg.train_pairs, cfg.seed, cfg.height, cfg.width))
    data.push_back(std::move(s.pair));
  FusionModel model(cfg);
  const TrainResult tr = train(model, data);

  std::vector<MetricValues> values;
  for (const auto& p : held_out_pairs(cfg, kHeldOutScenes)) {
    const Tensor fused = fuse_image(model, p.visible_rgb, p.infrared);
    values.push_back(compute_metrics(quantize_gray(to_grayscale(p.visible_rgb)),
                                     quantize_gray(p.infrared), quantize_gray(fused)));
  }
  return {setting, tr.steps.empty() ? 0.0 : tr.steps.back().total, aggregate(values)};
}

std::string format_sweep_csv(const FusionConfig& base, const std::vector<SweepRow>& rows) {
  std::string out = "# config: " + base.summary() + "\n";
  out += "setting,experts,top_k,final_loss";
  for (const char* n : kMetricNames) out += std::string(",") + n;
  out += "\n";
  for (const auto& r : rows)
    out += r.setting.label + "," + std::to_string(r.setting.experts) + "," +
           std::to_string(r.setting.top_k) + "," + fmt(r.final_loss) + metric_cells(r.metrics) + "\n";
  return out;
}

}  // namespace moefusion
