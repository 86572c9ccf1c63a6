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

#include <optional>
#include <string>
#include <vector>

#include "moefusion/config.hpp"
#include "moefusion/imageio.hpp"
#include "moefusion/metrics.hpp"

namespace moefusion {

// One manifest line: "visible infrared fused [boxes]". Paths are resolved
// against the manifest's directory when relative.
struct EvalEntry {
  std::size_t line = 0;
  std::string visible;
  std::string infrared;
  std::string fused;
  std::optional<std::string> boxes;
};

// Throws kFormat naming the line for a malformed entry.
std::vector<EvalEntry> parse_eval_manifest(const std::string& text, const std::string& base_dir);

// Visible (gray or RGB, reduced to luma), infrared and fused (gray or RGB)
// images, 8-bit quantised.
struct EvalTriple {
  GrayImage8 visible;
  GrayImage8 infrared;
  GrayImage8 fused;
  Tensor mask;  // empty unless boxes were given
};

EvalTriple load_eval_triple(const EvalEntry& entry);

// Per pair a full-image row, plus foreground and background rows when
// `regions` is set. Errors carry the manifest line number.
std::vector<MetricReport> evaluate_manifest(const std::string& manifest_path, bool regions);

// CSV "pair,region,EN,SF,SD,MI,VIF,AG,SCD,Qabf" followed by one aggregate
// row ("mean") per region present. `header` lines are written as comments.
std::string format_metric_csv(const std::vector<MetricReport>& rows, const std::string& header);

// Grid item: N experts, top K, written "E<N>K<K>".
struct ExpertSetting {
  std::size_t experts = 0;
  std::size_t top_k = 0;
  std::string label;
};

struct SweepGrid {
  std::vector<ExpertSetting> settings;
  std::vector<std::string> warnings;  // skipped entries
};

// Comma-separated list such as "E2K2,E4K2,E4K1". Malformed or invalid
// entries (K > N, odd N, K = 0) are skipped with a warning.
SweepGrid parse_sweep_grid(const std::string& text);

struct SweepRow {
  ExpertSetting setting;
  double final_loss = 0.0;
  MetricValues metrics;  // mean over the held-out scenes
};

inline constexpr std::size_t kHeldOutScenes = 6;

// Held-out synthetic scenes, disjoint in seed from the training corpus.
std::vector<AnnotatedPair> held_out_pairs(const FusionConfig& config, std::size_t count);

// Trains `base` with each grid setting on the same seeded synthetic corpus and
// reports the mean metrics of the fused held-out scenes.
SweepRow run_sweep_setting(const FusionConfig& base, const ExpertSetting& setting);

std::string format_sweep_csv(const FusionConfig& base, const std::vector<SweepRow>& rows);

}  // namespace moefusion
