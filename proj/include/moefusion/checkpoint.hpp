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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "moefusion/fusion_net.hpp"

namespace moefusion {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'E', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Record kinds inside a checkpoint.
enum class RecordKind : std::uint8_t {
  kParameter = 0,
  kBuffer = 1,
  kFirstMoment = 2,
  kSecondMoment = 3,
};

struct LoadedModel {
  std::unique_ptr<FusionModel> model;
  std::uint64_t step = 0;  // optimizer steps already taken
};

// Layout (all integers little-endian, values IEEE-754 binary64 LE):
//   magic[8] "MOEFCKPT", u32 version, u64 config_len, config text,
//   u64 step, u64 record_count, then per record:
//   u8 kind, u32 name_len, name, u64 aux (Adam step for parameters),
//   u64 n, u64 c, u64 h, u64 w, f64[n*c*h*w].
std::vector<std::uint8_t> serialize_checkpoint(const FusionModel& model, std::uint64_t step);
LoadedModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const FusionModel& model, std::uint64_t step);
LoadedModel load_checkpoint(const std::string& path);

}  // namespace moefusion
