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

#include <cstddef>
#include <cstdint>
#include <string>

namespace moefusion {

enum class Variant {
  kFull,
  kNoMole,  // x_f = concat(x_dense^I, x_dense^V), 128 channels
  kNoMoge,  // single fixed decoder in place of the global experts
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

// Every architectural and training hyperparameter.
struct FusionConfig {
  std::size_t num_experts = 4;
  std::size_t top_k = 2;
  double alpha = 10.0;
  double load_weight = 0.01;
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 24;
  // When nonzero, training stops after this many optimizer steps instead of
  // after `epochs` passes.
  std::size_t steps = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;
  bool mole_bg_variant = false;
  Variant variant = Variant::kFull;
  // Size of the synthetic corpus generated when no dataset is supplied.
  std::size_t train_pairs = 8;

  // Throws kInvalidArgument on violated invariants.
  void validate() const;

  // Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Parses flat `key = value` text; '#' starts a comment.
  void merge_text(const std::string& text);
  void merge_file(const std::string& path);

  // Canonical `key = value` lines in a fixed key order.
  std::string to_text() const;
  // Same content on one line, for artifact headers.
  std::string summary() const;

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

}  // namespace moefusion
