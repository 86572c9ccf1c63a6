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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "moefusion/error.hpp"
#include "moefusion/imageio.hpp"

namespace mf = moefusion;
using mf::Tensor;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> with_payload(const std::string& header, std::vector<std::uint8_t> px) {
  auto out = bytes_of(header);
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

mf::PnmImage random_pnm(std::mt19937_64& gen, std::size_t w, std::size_t h, std::size_t c) {
  mf::PnmImage img{w, h, c, std::vector<std::uint8_t>(w * h * c)};
  for (auto& p : img.pixels) p = std::uint8_t(gen());
  return img;
}

// Expects a kFormat parse error whose message names the byte offset.
void expect_parse_error(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& fragment) {
  try {
    mf::parse_pnm(bytes);
    FAIL() << "expected a parse error";
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kFormat);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("byte " + std::to_string(offset)), std::string::npos) << msg;
    EXPECT_NE(msg.find(fragment), std::string::npos) << msg;
  }
}

Tensor rgb(double r, double g, double b) {
  return Tensor({1, 3, 1, 1}, std::vector<double>{r, g, b});
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("moefusion_test_" + name)).string();
}

}  // namespace

TEST(Pnm, HandBuiltGraymap) {
  const auto img = mf::parse_pnm(with_payload("P5 2 2 255\n", {0, 64, 128, 255}));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.channels, 1u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 64, 128, 255}));
  const Tensor t = mf::to_tensor(img);
  EXPECT_EQ(t.shape(), (mf::Shape{1, 1, 2, 2}));
  EXPECT_EQ(t[1], 64 / 255.0);
  EXPECT_EQ(t[3], 1.0);
}

TEST(Pnm, PixmapWithCommentsAndPlanarTensor) {
  const auto img =
      mf::parse_pnm(with_payload("P6\n# made by hand\n2 1\n# another\n255\n", {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(img.channels, 3u);
  const Tensor t = mf::to_tensor(img);
  // Interleaved RGBRGB becomes planar RR GG BB.
  EXPECT_EQ(t.at(0, 0, 0, 1), 4 / 255.0);
  EXPECT_EQ(t.at(0, 2, 0, 0), 3 / 255.0);
}

TEST(Pnm, UnsupportedMaxvalReportsOffset) {
  expect_parse_error(with_payload("P5 2 2 65535\n", std::vector<std::uint8_t>(8)), 7, "maxval 65535");
  expect_parse_error(with_payload("P5 2 2 15\n", std::vector<std::uint8_t>(4)), 7, "maxval");
}

TEST(Pnm, MalformedHeaders) {
  expect_parse_error(bytes_of("P"), 0, "short");
  expect_parse_error(bytes_of("P3 2 2 255\n0 0 0 0"), 0, "magic");
  expect_parse_error(bytes_of("P5 x 2 255\n"), 3, "width");
  expect_parse_error(bytes_of("P5 2"), 4, "height");
  expect_parse_error(bytes_of("P52 2 255\n"), 2, "whitespace");
  expect_parse_error(bytes_of("P5 0 2 255\n"), 7, "zero");
}

TEST(Pnm, TruncatedAndTrailingPayload) {
  expect_parse_error(with_payload("P5 2 2 255\n", {1, 2, 3}), 14, "truncated");
  expect_parse_error(with_payload("P5 2 2 255\n", {1, 2, 3, 4, 5}), 15, "trailing");
}

TEST(Pnm, CanonicalEncodingRoundTripsBytes) {
  std::mt19937_64 gen(1);
  for (std::size_t c : {1u, 3u})
    for (int rep = 0; rep < 10; ++rep) {
      const auto img = random_pnm(gen, 1 + gen() % 17, 1 + gen() % 13, c);
      const auto bytes = mf::encode_pnm(img, rep % 2 ? "note" : "");
      EXPECT_EQ(mf::encode_pnm(mf::parse_pnm(bytes), rep % 2 ? "note" : ""), bytes);
      EXPECT_EQ(mf::from_tensor(mf::to_tensor(img)).pixels, img.pixels);
    }
  const auto bytes = mf::encode_pnm(mf::PnmImage{2, 1, 1, {7, 9}}, "hello");
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), std::string("P5\n# hello\n2 1\n255\n\x07\x09"));
}

TEST(Pnm, FileRoundTripIsByteIdentical) {
  std::mt19937_64 gen(2);
  const std::string path = temp_path("roundtrip.ppm");
  const auto img = random_pnm(gen, 9, 7, 3);
  mf::write_pnm(path, img, "x");
  const auto first = mf::read_file_bytes(path);
  mf::write_pnm(path, mf::read_pnm(path), "x");
  EXPECT_EQ(mf::read_file_bytes(path), first);
  std::filesystem::remove(path);
}

TEST(Pnm, MissingFileIsIoError) {
  try {
    mf::read_pnm(temp_path("does_not_exist.pgm"));
    FAIL();
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kIo);
  }
}

TEST(Quantize, RoundHalfUpAndClamp) {
  EXPECT_EQ(mf::quantize(0.0), 0);
  EXPECT_EQ(mf::quantize(1.0), 255);
  EXPECT_EQ(mf::quantize(0.5 / 255.0), 1);
  EXPECT_EQ(mf::quantize(0.49 / 255.0), 0);
  EXPECT_EQ(mf::quantize(-0.3), 0);
  EXPECT_EQ(mf::quantize(7.0), 255);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(mf::quantize(b / 255.0), b);
}

TEST(Color, Grayscale) {
  EXPECT_NEAR(mf::to_grayscale(rgb(1, 1, 1))[0], 1.0, 1e-15);
  EXPECT_NEAR(mf::to_grayscale(rgb(1, 0, 0))[0], 0.299, 1e-15);
  for (double c : {0.0, 0.25, 0.9}) EXPECT_NEAR(mf::to_grayscale(rgb(c, c, c))[0], c, 1e-15);
}

TEST(Color, YcbcrAnchors) {
  const Tensor w = mf::rgb_to_ycbcr(rgb(1, 1, 1)), k = mf::rgb_to_ycbcr(rgb(0, 0, 0));
  EXPECT_NEAR(w[0], 1.0, 1e-12);
  EXPECT_NEAR(w[1], 0.5, 1e-12);
  EXPECT_NEAR(w[2], 0.5, 1e-12);
  EXPECT_EQ(k[0], 0.0);
  EXPECT_EQ(k[1], 0.5);
  EXPECT_EQ(k[2], 0.5);
}

TEST(Color, InverseMatrixIsExact) {
  const auto& f = mf::ycbcr_forward_matrix();
  const auto& inv = mf::ycbcr_inverse_matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += f[r * 3 + k] * inv[k * 3 + c];
      EXPECT_NEAR(s, r == c ? 1.0 : 0.0, 1e-14);
    }
}

TEST(Color, ThousandRandomColorsRoundTrip) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor colors({1, 3, 1, 1000});
  for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = u(gen);
  const Tensor back = mf::ycbcr_to_rgb(mf::rgb_to_ycbcr(colors));
  double worst = 0.0;
  for (std::size_t i = 0; i < colors.size(); ++i) worst = std::max(worst, std::fabs(back[i] - colors[i]));
  EXPECT_LT(worst, 1.0 / 255.0);
}

TEST(Colorize, LumaOfVisibleReproducesVisible) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor v({1, 3, 4, 5});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(gen);
  const Tensor out = mf::colorize_fused(mf::to_grayscale(v), v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LT(std::fabs(out[i] - v[i]), 1.0 / 255.0);
}

TEST(Colorize, GrayVisibleStaysGray) {
  Tensor v({1, 3, 2, 2});
  const double levels[4] = {0.0, 0.3, 0.6, 1.0};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) v[c * 4 + i] = levels[i];
  const Tensor f({1, 1, 2, 2}, std::vector<double>{0.9, 0.1, 0.45, 0.2});
  const Tensor out = mf::colorize_fused(f, v);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out[c * 4 + i], f[i], 1e-12);
}

TEST(Colorize, ZeroFusedKeepsVisibleChroma) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor v({1, 3, 3, 3});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(gen);
  const Tensor out = mf::colorize_fused(Tensor::zeros({1, 1, 3, 3}), v);
  // Y = 0 with the visible chroma, converted back (and clamped) to RGB.
  Tensor ycc = mf::rgb_to_ycbcr(v);
  for (std::size_t i = 0; i < 9; ++i) ycc[i] = 0.0;
  EXPECT_EQ(out.vector(), mf::ycbcr_to_rgb(ycc).vector());
  // Neutral chroma gives exact black.
  const Tensor gray = mf::colorize_fused(Tensor::zeros({1, 1, 1, 1}), rgb(0.4, 0.4, 0.4));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(gray[c], 0.0, 1e-12);
}

TEST(Colorize, SizeMismatchThrows) {
  EXPECT_THROW(mf::colorize_fused(Tensor::zeros({1, 1, 2, 3}), Tensor::zeros({1, 3, 2, 2})),
               mf::Error);
}

TEST(Mask, Examples) {
  const std::vector<mf::Box> full{{0, 0, 5, 4}};
  const Tensor ones = mf::mask_from_boxes(full, 4, 5);
  const Tensor zeros = mf::mask_from_boxes({}, 4, 5);
  for (double v : ones.vector()) EXPECT_EQ(v, 1.0);
  for (double v : zeros.vector()) EXPECT_EQ(v, 0.0);
}

TEST(Mask, MatchesBruteForceRasterizer) {
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 50; ++rep) {
    const long h = 3 + long(gen() % 10), w = 3 + long(gen() % 10);
    std::vector<mf::Box> boxes;
    for (int k = 0; k < int(gen() % 4); ++k) {
      const long x0 = long(gen() % w), y0 = long(gen() % h);
      boxes.push_back({x0, y0, x0 + long(gen() % (w - x0 + 1)), y0 + long(gen() % (h - y0 + 1))});
    }
    const Tensor m = mf::mask_from_boxes(boxes, h, w);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        bool inside = false;
        for (const auto& b : boxes) inside |= x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
        EXPECT_EQ(m[y * w + x], inside ? 1.0 : 0.0);
      }
    auto doubled = boxes;
    doubled.insert(doubled.end(), boxes.begin(), boxes.end());
    EXPECT_EQ(mf::mask_from_boxes(doubled, h, w).vector(), m.vector());
  }
  // Overlap counted once: 2x2 + 2x2 sharing one pixel covers 7.
  const std::vector<mf::Box> overlap{{0, 0, 2, 2}, {1, 1, 3, 3}};
  const Tensor union_mask = mf::mask_from_boxes(overlap, 4, 4);
  double area = 0.0;
  for (double v : union_mask.vector()) area += v;
  EXPECT_EQ(area, 7.0);
}

TEST(Mask, OutOfBoundsBoxIsNamed) {
  const std::vector<mf::Box> bad{{0, 0, 2, 2}, {3, 1, 6, 2}};
  try {
    mf::mask_from_boxes(bad, 4, 5);
    FAIL();
  } catch (const mf::Error& e) {
    EXPECT_NE(std::string(e.what()).find(mf::to_string(bad[1])), std::string::npos) << e.what();
  }
  const std::vector<mf::Box> inverted{{3, 0, 1, 2}};
  EXPECT_THROW(mf::mask_from_boxes(inverted, 4, 5), mf::Error);
}

TEST(Boxes, ParseWithCommentsAndErrors) {
  const auto boxes = mf::parse_boxes("# header\n1 2 3 4\n\n  5 6 7 8 # trailing\n");
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[1], (mf::Box{5, 6, 7, 8}));
  EXPECT_EQ(mf::parse_boxes(mf::format_boxes(boxes)), boxes);
  try {
    mf::parse_boxes("1 2 3 4\n1 2 3\n");
    FAIL();
  } catch (const mf::Error& e) {
    EXPECT_EQ(e.code(), mf::ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(mf::parse_boxes("1 2 3 4 5\n"), mf::Error);
}

TEST(AnnotatedPair, DerivesMaskAndValidates) {
  const auto p = mf::make_annotated_pair(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({1, 1, 4, 4}),
                                         {{1, 1, 3, 2}});
  double area = 0.0;
  for (double v : p.mask.vector()) area += v;
  EXPECT_EQ(area, 2.0);
  EXPECT_THROW(mf::make_annotated_pair(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({1, 1, 4, 5}), {}),
               mf::Error);
}
