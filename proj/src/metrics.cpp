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

#include "moefusion/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "moefusion/error.hpp"

namespace moefusion {

namespace {

void check_nonempty(const GrayImage8& f, const char* op) {
  require(f.width > 0 && f.height > 0 && f.pixels.size() == f.width * f.height,
          ErrorCode::kShape, std::string(op) + ": zero-area or malformed image");
}

void check_same(const GrayImage8& a, const GrayImage8& b, const char* op) {
  check_nonempty(a, op);
  check_nonempty(b, op);
  require(a.width == b.width && a.height == b.height, ErrorCode::kShape,
          std::string(op) + ": image sizes differ (" + std::to_string(a.width) + "x" +
              std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
              std::to_string(b.height) + ")");
}

double entropy_of_counts(std::span<const std::size_t> counts, double total) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

double pair_information(const GrayImage8& x, const GrayImage8& f) {
  std::vector<std::size_t> joint(256 * 256, 0);
  std::array<std::size_t, 256> hx{}, hf{};
  for (std::size_t i = 0; i < f.size(); ++i) {
    ++joint[x.pixels[i] * 256 + f.pixels[i]];
    ++hx[x.pixels[i]];
    ++hf[f.pixels[i]];
  }
  const double n = static_cast<double>(f.size());
  const double mi = entropy_of_counts(hx, n) + entropy_of_counts(hf, n) - entropy_of_counts(joint, n);
  return std::max(mi, 0.0);
}

std::vector<double> as_doubles(const GrayImage8& img) {
  return {img.pixels.begin(), img.pixels.end()};
}

struct EdgeField {
  std::vector<double> strength;
  std::vector<double> angle;
};

EdgeField sobel_edges(const GrayImage8& img) {
  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  auto px = [&](long y, long x) {
    if (y < 0) y = -y;
    if (y >= h) y = 2 * (h - 1) - y;
    if (x < 0) x = -x;
    if (x >= w) x = 2 * (w - 1) - x;
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return static_cast<double>(img.pixels[y * w + x]);
  };
  EdgeField e{std::vector<double>(img.size()), std::vector<double>(img.size())};
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      e.strength[y * w + x] = std::sqrt(gx * gx + gy * gy);
      e.angle[y * w + x] = gx == 0.0 ? std::numbers::pi / 2.0 : std::atan(gy / gx);
    }
  return e;
}

// Normalised 1-D Gaussian of length n with sigma n / 5, as used by the
// separable VIF window.
std::vector<double> gaussian_1d(int n) {
  const double sigma = n / 5.0;
  std::vector<double> g(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = i - (n - 1) / 2.0;
    g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
};

// 'valid' separable filtering.
Plane filter_valid(const Plane& in, const std::vector<double>& g) {
  const std::size_t n = g.size();
  if (in.h < n || in.w < n) return {};
  const std::size_t oh = in.h - n + 1, ow = in.w - n + 1;
  std::vector<double> tmp(in.h * ow);
  for (std::size_t y = 0; y < in.h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[k] * in.v[y * in.w + x + k];
      tmp[y * ow + x] = s;
    }
  Plane out{oh, ow, std::vector<double>(oh * ow)};
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[k] * tmp[(y + k) * ow + x];
      out.v[y * ow + x] = s;
    }
  return out;
}

Plane downsample(const Plane& in) {
  Plane out{(in.h + 1) / 2, (in.w + 1) / 2, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x) out.v[y * out.w + x] = in.v[2 * y * in.w + 2 * x];
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

}  // namespace

bool MetricValues::all_finite() const {
  for (double v : as_array())
    if (!std::isfinite(v)) return false;
  return true;
}

std::string to_string(Region r) {
  switch (r) {
    case Region::kFull: return "full";
    case Region::kForeground: return "foreground";
    case Region::kBackground: return "background";
  }
  return "full";
}

double entropy(const GrayImage8& f) {
  check_nonempty(f, "entropy");
  std::array<std::size_t, 256> hist{};
  for (auto p : f.pixels) ++hist[p];
  return entropy_of_counts(hist, static_cast<double>(f.size()));
}

double spatial_frequency(const GrayImage8& f) {
  check_nonempty(f, "spatial_frequency");
  require(f.height >= 2 && f.width >= 2, ErrorCode::kShape,
          "spatial_frequency: image must be at least 2x2");
  double rf = 0.0, cf = 0.0;
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x) {
      const double v = f.at(y, x) / 255.0;
      if (x > 0) {
        const double d = v - f.at(y, x - 1) / 255.0;
        rf += d * d;
      }
      if (y > 0) {
        const double d = v - f.at(y - 1, x) / 255.0;
        cf += d * d;
      }
    }
  rf /= static_cast<double>(f.height * (f.width - 1));
  cf /= static_cast<double>((f.height - 1) * f.width);
  return std::sqrt(rf + cf);
}

double std_dev(const GrayImage8& f) {
  check_nonempty(f, "std_dev");
  const double n = static_cast<double>(f.size());
  double mean = 0.0;
  for (auto p : f.pixels) mean += p;
  mean /= n;
  double var = 0.0;
  for (auto p : f.pixels) var += (p - mean) * (p - mean);
  return std::sqrt(var / n);
}

double mutual_information(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  check_same(a, f, "mutual_information");
  check_same(b, f, "mutual_information");
  return pair_information(a, f) + pair_information(b, f);
}

double avg_gradient(const GrayImage8& f) {
  check_nonempty(f, "avg_gradient");
  require(f.height >= 2 && f.width >= 2, ErrorCode::kShape,
          "avg_gradient: image must be at least 2x2");
  double s = 0.0;
  for (std::size_t y = 0; y + 1 < f.height; ++y)
    for (std::size_t x = 0; x + 1 < f.width; ++x) {
      const double v = f.at(y, x) / 255.0;
      const double dx = f.at(y, x + 1) / 255.0 - v;
      const double dy = f.at(y + 1, x) / 255.0 - v;
      s += std::sqrt((dx * dx + dy * dy) / 2.0);
    }
  return s / static_cast<double>((f.height - 1) * (f.width - 1));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && !x.empty(), ErrorCode::kShape, "pearson: size mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double scd(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  check_same(a, f, "scd");
  check_same(b, f, "scd");
  const auto av = as_doubles(a), bv = as_doubles(b), fv = as_doubles(f);
  std::vector<double> f_minus_b(fv.size()), f_minus_a(fv.size());
  for (std::size_t i = 0; i < fv.size(); ++i) {
    f_minus_b[i] = fv[i] - bv[i];
    f_minus_a[i] = fv[i] - av[i];
  }
  return pearson(f_minus_b, av) + pearson(f_minus_a, bv);
}

double qabf(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f, const QabfParams& p) {
  check_same(a, f, "qabf");
  check_same(b, f, "qabf");
  const EdgeField ea = sobel_edges(a), eb = sobel_edges(b), ef = sobel_edges(f);
  auto preservation = [&](const EdgeField& src, std::size_t i) {
    const double gs = src.strength[i], gf = ef.strength[i];
    const double hi = std::max(gs, gf);
    const double g = hi == 0.0 ? 0.0 : std::min(gs, gf) / hi;
    const double alpha = 1.0 - std::fabs(src.angle[i] - ef.angle[i]) / (std::numbers::pi / 2.0);
    const double qg = p.gamma_g / (1.0 + std::exp(p.k_g * (g - p.sigma_g)));
    const double qa = p.gamma_a / (1.0 + std::exp(p.k_a * (alpha - p.sigma_a)));
    return qg * qa;
  };
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double wa = ea.strength[i], wb = eb.strength[i];
    if (wa == 0.0 && wb == 0.0) continue;
    num += preservation(ea, i) * wa + preservation(eb, i) * wb;
    den += wa + wb;
  }
  return den == 0.0 ? 0.0 : std::clamp(num / den, 0.0, 1.0);
}

double vif_single(const GrayImage8& reference, const GrayImage8& distorted) {
  check_same(reference, distorted, "vif");
  Plane ref{reference.height, reference.width, as_doubles(reference)};
  Plane dist{distorted.height, distorted.width, as_doubles(distorted)};
  double num = 0.0, den = 0.0;
  for (int scale = 1; scale <= kVifScales; ++scale) {
    const int n = (1 << (kVifScales - scale + 1)) + 1;
    const auto g = gaussian_1d(n);
    if (scale > 1) {
      ref = filter_valid(ref, g);
      dist = filter_valid(dist, g);
      if (ref.v.empty()) break;
      ref = downsample(ref);
      dist = downsample(dist);
    }
    const Plane mu1 = filter_valid(ref, g);
    if (mu1.v.empty()) break;
    const Plane mu2 = filter_valid(dist, g);
    const Plane rr = filter_valid(product(ref, ref), g);
    const Plane dd = filter_valid(product(dist, dist), g);
    const Plane rd = filter_valid(product(ref, dist), g);
    for (std::size_t i = 0; i < mu1.v.size(); ++i) {
      double s1 = std::max(rr.v[i] - mu1.v[i] * mu1.v[i], 0.0);
      const double s2 = std::max(dd.v[i] - mu2.v[i] * mu2.v[i], 0.0);
      const double s12 = rd.v[i] - mu1.v[i] * mu2.v[i];
      double gain = s12 / (s1 + kVifVarianceFloor);
      double sv = s2 - gain * s12;
      if (s1 < kVifVarianceFloor) {
        gain = 0.0;
        sv = s2;
        s1 = 0.0;
      }
      if (s2 < kVifVarianceFloor) {
        gain = 0.0;
        sv = 0.0;
      }
      if (gain < 0.0) {
        sv = s2;
        gain = 0.0;
      }
      sv = std::max(sv, kVifVarianceFloor);
      num += std::log10(1.0 + gain * gain * s1 / (sv + kVifNoiseVariance));
      den += std::log10(1.0 + s1 / kVifNoiseVariance);
    }
  }
  return den == 0.0 ? 0.0 : num / den;
}

double vif(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  return vif_single(a, f) + vif_single(b, f);
}

MetricValues compute_metrics(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  check_same(a, f, "metrics");
  check_same(b, f, "metrics");
  MetricValues m;
  m.en = entropy(f);
  m.sf = spatial_frequency(f);
  m.sd = std_dev(f);
  m.mi = mutual_information(a, b, f);
  m.vif = vif(a, b, f);
  m.ag = avg_gradient(f);
  m.scd = scd(a, b, f);
  m.qabf = qabf(a, b, f);
  return m;
}

GrayImage8 apply_mask(const GrayImage8& img, const Tensor& mask, bool keep_foreground) {
  require(mask.size() == img.size() && mask.shape().h == img.height &&
              mask.shape().w == img.width,
          ErrorCode::kShape, "apply_mask: mask size does not match image");
  GrayImage8 out = img;
  for (std::size_t i = 0; i < img.size(); ++i) {
    require(mask[i] == 0.0 || mask[i] == 1.0, ErrorCode::kInvalidArgument,
            "apply_mask: mask must be binary");
    const bool fg = mask[i] == 1.0;
    if (fg != keep_foreground) out.pixels[i] = 0;
  }
  return out;
}

std::pair<MetricValues, MetricValues> masked_metrics(const GrayImage8& a, const GrayImage8& b,
                                                     const GrayImage8& f, const Tensor& mask) {
  const MetricValues fg = compute_metrics(apply_mask(a, mask, true), apply_mask(b, mask, true),
                                          apply_mask(f, mask, true));
  const MetricValues bg = compute_metrics(apply_mask(a, mask, false), apply_mask(b, mask, false),
                                          apply_mask(f, mask, false));
  return {fg, bg};
}

MetricValues aggregate(std::span<const MetricValues> values) {
  MetricValues out;
  if (values.empty()) return out;
  std::array<double, 8> acc{};
  for (const auto& v : values) {
    const auto a = v.as_array();
    for (std::size_t i = 0; i < 8; ++i) acc[i] += a[i];
  }
  const double n = static_cast<double>(values.size());
  out = {acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n,
         acc[4] / n, acc[5] / n, acc[6] / n, acc[7] / n};
  return out;
}

}  // namespace moefusion
