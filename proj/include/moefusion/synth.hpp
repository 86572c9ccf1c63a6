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
#include <string>
#include <vector>

#include "moefusion/imageio.hpp"

namespace moefusion {

enum class SceneKind { kVisibleDominant, kInfraredDominant, kCoDominant };

std::string to_string(SceneKind k);
SceneKind parse_scene_kind(const std::string& s);

struct SynthParams {
  double texture_frequency = 0.0;  // cycles per pixel
  double illumination = 0.0;       // peak visible illumination
  Box lit_region;                  // region of strong visible illumination
  std::vector<Box> blobs;          // infrared hot spots (empty for visible-dominant)
};

struct SynthScene {
  SceneKind kind = SceneKind::kVisibleDominant;
  AnnotatedPair pair;
  SynthParams params;
};

// Deterministic per (kind, seed, size). Every scene has at least one box.
SynthScene synth_pair(SceneKind kind, std::uint64_t seed, std::size_t height, std::size_t width);

// `count` scenes cycling through the three kinds, seeds derived from `seed`.
std::vector<SynthScene> synth_corpus(std::size_t count, std::uint64_t seed, std::size_t height,
                                     std::size_t width);

// Writes vis_NNN.ppm, ir_NNN.pgm, boxes_NNN.txt and a manifest `pairs.txt`
// ("visible infrared boxes" per line, relative paths) into `dir`.
void write_corpus(const std::string& dir, const std::vector<SynthScene>& scenes);

// Reads a pairs manifest as written by write_corpus; relative paths resolve
// against the manifest's directory.
std::vector<AnnotatedPair> read_corpus(const std::string& manifest_path);

// Crops rows/cols of a (n, c, H, W) tensor to the box.
Tensor crop(const Tensor& image, const Box& box);

}  // namespace moefusion
