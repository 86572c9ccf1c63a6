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

#include "moefusion/imageio.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "moefusion/error.hpp"

namespace moefusion {

namespace {

[[noreturn]] void parse_error(std::size_t offset, const std::string& what) {
  fail(ErrorCode::kFormat, "PNM parse error at byte " + std::to_string(offset) + ": " + what);
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000) parse_error(start, std::string(what) + " is too large");
      ++pos_;
    }
    if (pos_ == start) {
      if (pos_ >= bytes_.size()) parse_error(pos_, std::string("unexpected end of header reading ") + what);
      parse_error(pos_, std::string("expected ") + what);
    }
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Tensor expect_rgb(const Tensor& t, const char* op) {
  require(t.shape().c == 3, ErrorCode::kShape,
          std::string(op) + ": expected 3 channels, got " + std::to_string(t.shape().c));
  return t;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Applies `m` (row-major 3x3) per pixel with optional chroma offsets.
Tensor apply3(const Tensor& in, const std::array<double, 9>& m, bool add_offset, bool sub_offset) {
  const Shape s = in.shape();
  Tensor out(s);
  const std::size_t hw = s.plane();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      double v[3];
      for (std::size_t c = 0; c < 3; ++c) v[c] = in.at(n, c, 0, i);
      if (sub_offset) {
        v[1] -= 0.5;
        v[2] -= 0.5;
      }
      for (std::size_t r = 0; r < 3; ++r) {
        double acc = m[r * 3] * v[0] + m[r * 3 + 1] * v[1] + m[r * 3 + 2] * v[2];
        if (add_offset && r > 0) acc += 0.5;
        out.at(n, r, 0, i) = clamp01(acc);
      }
    }
  return out;
}

}  // namespace

PnmImage parse_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) parse_error(0, "file too short for a PNM magic number");
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    parse_error(0, "unsupported magic (expected binary P5 or P6)");
  PnmImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader r(bytes.subspan(0));
  r.advance();
  r.advance();
  if (r.pos() < bytes.size() && !is_space(bytes[r.pos()]) && bytes[r.pos()] != '#')
    parse_error(r.pos(), "expected whitespace after magic number");
  img.width = r.read_uint("width");
  img.height = r.read_uint("height");
  r.skip_space_and_comments();
  const std::size_t maxval_at = r.pos();
  const std::size_t maxval = r.read_uint("maxval");
  if (maxval != 255)
    parse_error(maxval_at, "unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (img.width == 0 || img.height == 0) parse_error(maxval_at, "zero image dimension");
  if (r.pos() >= bytes.size() || !is_space(bytes[r.pos()]))
    parse_error(r.pos(), "expected a single whitespace byte before the raster");
  const std::size_t start = r.pos() + 1;
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - start < need)
    parse_error(bytes.size(), "truncated raster: need " + std::to_string(need) + " bytes, have " +
                                  std::to_string(bytes.size() - start));
  if (bytes.size() - start > need)
    parse_error(start + need, "trailing bytes after raster");
  img.pixels.assign(bytes.begin() + static_cast<long>(start), bytes.end());
  return img;
}

std::vector<std::uint8_t> encode_pnm(const PnmImage& img, const std::string& comment) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::kInvalidArgument,
          "encode_pnm: channels must be 1 or 3");
  require(img.pixels.size() == img.width * img.height * img.channels, ErrorCode::kShape,
          "encode_pnm: pixel buffer does not match dimensions");
  require(comment.find('\n') == std::string::npos, ErrorCode::kInvalidArgument,
          "encode_pnm: comment must be a single line");
  std::string header = img.channels == 1 ? "P5\n" : "P6\n";
  if (!comment.empty()) header += "# " + comment + "\n";
  header += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write to '" + path + "' failed");
}

PnmImage read_pnm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_pnm(bytes);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

void write_pnm(const std::string& path, const PnmImage& img, const std::string& comment) {
  write_file_bytes(path, encode_pnm(img, comment));
}

std::uint8_t quantize(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Tensor to_tensor(const PnmImage& img) {
  Tensor out({1, img.channels, img.height, img.width});
  const std::size_t hw = img.width * img.height;
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < img.channels; ++c)
      out[c * hw + i] = img.pixels[i * img.channels + c] / 255.0;
  return out;
}

PnmImage from_tensor(const Tensor& image) {
  const Shape s = image.shape();
  require(s.n >= 1 && (s.c == 1 || s.c == 3), ErrorCode::kShape,
          "from_tensor: expected (n, 1|3, H, W), got " + to_string(s));
  PnmImage img{s.w, s.h, s.c, std::vector<std::uint8_t>(s.sample())};
  const std::size_t hw = s.plane();
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < s.c; ++c) img.pixels[i * s.c + c] = quantize(image[c * hw + i]);
  return img;
}

GrayImage8 quantize_gray(const Tensor& gray) {
  const Shape s = gray.shape();
  require(s.c == 1 && s.n >= 1, ErrorCode::kShape,
          "quantize_gray: expected single-channel image, got " + to_string(s));
  GrayImage8 out{s.w, s.h, std::vector<std::uint8_t>(s.plane())};
  for (std::size_t i = 0; i < s.plane(); ++i) out.pixels[i] = quantize(gray[i]);
  return out;
}

Tensor to_grayscale(const Tensor& rgb) {
  expect_rgb(rgb, "to_grayscale");
  const Shape s = rgb.shape();
  Tensor out({s.n, 1, s.h, s.w});
  const auto& m = ycbcr_forward_matrix();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.plane(); ++i)
      out[n * s.plane() + i] =
          m[0] * rgb.at(n, 0, 0, i) + m[1] * rgb.at(n, 1, 0, i) + m[2] * rgb.at(n, 2, 0, i);
  return out;
}

const std::array<double, 9>& ycbcr_forward_matrix() {
  static const std::array<double, 9> m{0.299,     0.587,     0.114,      //
                                       -0.168736, -0.331264, 0.5,        //
                                       0.5,       -0.418688, -0.081312};
  return m;
}

const std::array<double, 9>& ycbcr_inverse_matrix() {
  static const std::array<double, 9> inv = [] {
    const auto& f = ycbcr_forward_matrix();
    Eigen::Matrix3d m;
    m << f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8];
    const Eigen::Matrix3d i = m.inverse();
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out[r * 3 + c] = i(r, c);
    return out;
  }();
  return inv;
}

Tensor rgb_to_ycbcr(const Tensor& rgb) {
  expect_rgb(rgb, "rgb_to_ycbcr");
  return apply3(rgb, ycbcr_forward_matrix(), true, false);
}

Tensor ycbcr_to_rgb(const Tensor& ycbcr) {
  expect_rgb(ycbcr, "ycbcr_to_rgb");
  return apply3(ycbcr, ycbcr_inverse_matrix(), false, true);
}

Tensor colorize_fused(const Tensor& fused_gray, const Tensor& visible_rgb) {
  expect_rgb(visible_rgb, "colorize_fused");
  const Shape fs = fused_gray.shape(), vs = visible_rgb.shape();
  require(fs.c == 1 && fs.n == vs.n && fs.h == vs.h && fs.w == vs.w, ErrorCode::kShape,
          "colorize_fused: fused " + to_string(fs) + " does not match visible " + to_string(vs));
  Tensor ycc = rgb_to_ycbcr(visible_rgb);
  for (std::size_t n = 0; n < fs.n; ++n)
    for (std::size_t i = 0; i < fs.plane(); ++i)
      ycc.at(n, 0, 0, i) = clamp01(fused_gray[n * fs.plane() + i]);
  return ycbcr_to_rgb(ycc);
}

std::string to_string(const Box& b) {
  return "[" + std::to_string(b.x0) + " " + std::to_string(b.y0) + " " + std::to_string(b.x1) +
         " " + std::to_string(b.y1) + "]";
}

std::vector<Box> parse_boxes(const std::string& text) {
  std::vector<Box> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    Box b;
    if (!(fields >> b.x0)) {
      std::string rest;
      fields.clear();
      if (!(fields >> rest)) continue;  // blank line
      fail(ErrorCode::kFormat, "box line " + std::to_string(lineno) + ": expected 4 integers");
    }
    std::string extra;
    if (!(fields >> b.y0 >> b.x1 >> b.y1) || (fields >> extra))
      fail(ErrorCode::kFormat, "box line " + std::to_string(lineno) + ": expected 4 integers");
    out.push_back(b);
  }
  return out;
}

std::vector<Box> read_boxes(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_boxes(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

std::string format_boxes(std::span<const Box> boxes) {
  std::string out = "# x0 y0 x1 y1 (half-open)\n";
  for (const auto& b : boxes)
    out += std::to_string(b.x0) + " " + std::to_string(b.y0) + " " + std::to_string(b.x1) + " " +
           std::to_string(b.y1) + "\n";
  return out;
}

Tensor mask_from_boxes(std::span<const Box> boxes, std::size_t height, std::size_t width) {
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  for (const auto& b : boxes)
    require(b.x0 >= 0 && b.y0 >= 0 && b.x0 <= b.x1 && b.y0 <= b.y1 && b.x1 <= w && b.y1 <= h,
            ErrorCode::kInvalidArgument,
            "box " + to_string(b) + " lies outside the " + std::to_string(width) + "x" +
                std::to_string(height) + " image");
  Tensor mask({1, 1, height, width});
  for (const auto& b : boxes)
    for (long y = b.y0; y < b.y1; ++y)
      std::fill_n(mask.data() + y * w + b.x0, b.x1 - b.x0, 1.0);
  return mask;
}

AnnotatedPair make_annotated_pair(Tensor visible_rgb, Tensor infrared, std::vector<Box> boxes) {
  const Shape vs = visible_rgb.shape(), is = infrared.shape();
  require(vs.c == 3 && is.c == 1, ErrorCode::kShape,
          "annotated pair: expected RGB visible and single-channel infrared");
  require(vs.h == is.h && vs.w == is.w, ErrorCode::kShape,
          "annotated pair: visible " + std::to_string(vs.w) + "x" + std::to_string(vs.h) +
              " and infrared " + std::to_string(is.w) + "x" + std::to_string(is.h) +
              " differ in size");
  Tensor mask = mask_from_boxes(boxes, vs.h, vs.w);
  return {std::move(visible_rgb), std::move(infrared), std::move(boxes), std::move(mask)};
}

}  // namespace moefusion
