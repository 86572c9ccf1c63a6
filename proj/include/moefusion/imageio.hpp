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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moefusion/tensor.hpp"

namespace moefusion {

// Binary PNM raster as stored on disk: P5 (1 channel) or P6 (3 channels),
// maxval 255, pixels interleaved row-major.
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Parse errors carry the byte offset of the problem in their message.
PnmImage parse_pnm(std::span<const std::uint8_t> bytes);
// Canonical encoding: "P5\n# <comment>\n<w> <h>\n255\n" + payload (comment optional).
std::vector<std::uint8_t> encode_pnm(const PnmImage& img, const std::string& comment = "");

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

PnmImage read_pnm(const std::string& path);
void write_pnm(const std::string& path, const PnmImage& img, const std::string& comment = "");

// Value mapping: byte / 255 on read; round-half-up of v * 255 (clamped) on write.
std::uint8_t quantize(double v);
Tensor to_tensor(const PnmImage& img);       // (1, C, H, W)
PnmImage from_tensor(const Tensor& image);   // first sample of (n, 1|3, H, W)

// 8-bit single-channel image consumed by the metrics.
struct GrayImage8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t size() const { return pixels.size(); }
  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

GrayImage8 quantize_gray(const Tensor& gray);  // first sample of (n, 1, H, W)

// BT.601 luma: (n, 3, H, W) -> (n, 1, H, W)
Tensor to_grayscale(const Tensor& rgb);

// Full-range BT.601. Outputs are clamped to [0, 1].
Tensor rgb_to_ycbcr(const Tensor& rgb);
Tensor ycbcr_to_rgb(const Tensor& ycbcr);

// The 3x3 forward matrix and its exact inverse (row-major), with the chroma
// offset of 0.5 applied outside the matrix.
const std::array<double, 9>& ycbcr_forward_matrix();
const std::array<double, 9>& ycbcr_inverse_matrix();

// Y := clamp(fused), chroma from the visible image, converted back to RGB.
Tensor colorize_fused(const Tensor& fused_gray, const Tensor& visible_rgb);

// Half-open pixel box [x0, x1) x [y0, y1).
struct Box {
  long x0 = 0;
  long y0 = 0;
  long x1 = 0;
  long y1 = 0;

  friend bool operator==(const Box&, const Box&) = default;
};

std::string to_string(const Box& b);

// One box per line: "x0 y0 x1 y1"; '#' starts a comment.
std::vector<Box> parse_boxes(const std::string& text);
std::vector<Box> read_boxes(const std::string& path);
std::string format_boxes(std::span<const Box> boxes);

// Union of box interiors as a (1, 1, height, width) 0/1 tensor.
Tensor mask_from_boxes(std::span<const Box> boxes, std::size_t height, std::size_t width);

struct AnnotatedPair {
  Tensor visible_rgb;  // (1, 3, H, W)
  Tensor infrared;     // (1, 1, H, W)
  std::vector<Box> boxes;
  Tensor mask;         // (1, 1, H, W)
};

// Validates dimensions and derives the mask.
AnnotatedPair make_annotated_pair(Tensor visible_rgb, Tensor infrared, std::vector<Box> boxes);

}  // namespace moefusion
