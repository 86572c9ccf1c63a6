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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "moefusion/metrics.hpp"

using moefusion::GrayImage8;

namespace naive {

// Straightforward re-derivations of each metric. They share definitions with
// the library but none of its code paths.

inline double entropy(const GrayImage8& f) {
  std::map<int, double> count;
  for (auto p : f.pixels) count[p] += 1.0;
  double h = 0.0;
  for (const auto& [v, c] : count) {
    const double p = c / static_cast<double>(f.size());
    h += p * std::log2(1.0 / p);
  }
  return h;
}

inline double spatial_frequency(const GrayImage8& f) {
  long rf = 0, cf = 0;
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 1; x < f.width; ++x) {
      const long d = long(f.at(y, x)) - long(f.at(y, x - 1));
      rf += d * d;
    }
  for (std::size_t y = 1; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x) {
      const long d = long(f.at(y, x)) - long(f.at(y - 1, x));
      cf += d * d;
    }
  const double r = double(rf) / double(f.height * (f.width - 1));
  const double c = double(cf) / double((f.height - 1) * f.width);
  return std::sqrt(r + c) / 255.0;
}

inline double std_dev(const GrayImage8& f) {
  double s = 0.0, s2 = 0.0;
  for (auto p : f.pixels) {
    s += p;
    s2 += double(p) * p;
  }
  const double n = double(f.size());
  return std::sqrt(std::max(s2 / n - (s / n) * (s / n), 0.0));
}

inline double pair_mi(const GrayImage8& x, const GrayImage8& f) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> px, pf;
  const double n = double(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    joint[{x.pixels[i], f.pixels[i]}] += 1.0 / n;
    px[x.pixels[i]] += 1.0 / n;
    pf[f.pixels[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [k, p] : joint) mi += p * std::log2(p / (px[k.first] * pf[k.second]));
  return mi;
}

inline double mutual_information(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  return naive::pair_mi(a, f) + naive::pair_mi(b, f);
}

inline double avg_gradient(const GrayImage8& f) {
  double s = 0.0;
  for (std::size_t y = 0; y + 1 < f.height; ++y)
    for (std::size_t x = 0; x + 1 < f.width; ++x) {
      const double dx = double(f.at(y, x + 1)) - f.at(y, x);
      const double dy = double(f.at(y + 1, x)) - f.at(y, x);
      s += std::sqrt(0.5 * (dx * dx + dy * dy)) / 255.0;
    }
  return s / double((f.height - 1) * (f.width - 1));
}

// Single-pass Pearson on integer-valued data, exact sums.
inline double pearson(const std::vector<long>& x, const std::vector<long>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += double(x[i]) * x[i];
    syy += double(y[i]) * y[i];
    sxy += double(x[i]) * y[i];
  }
  const double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return std::clamp((n * sxy - sx * sy) / std::sqrt(vx * vy), -1.0, 1.0);
}

inline double scd(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  std::vector<long> av, bv, fb, fa;
  for (std::size_t i = 0; i < f.size(); ++i) {
    av.push_back(a.pixels[i]);
    bv.push_back(b.pixels[i]);
    fb.push_back(long(f.pixels[i]) - b.pixels[i]);
    fa.push_back(long(f.pixels[i]) - a.pixels[i]);
  }
  return pearson(fb, av) + pearson(fa, bv);
}

inline long mirror(long i, long n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

struct Edges {
  std::vector<double> g, a;
};

inline Edges sobel(const GrayImage8& img) {
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const long h = long(img.height), w = long(img.width);
  Edges e{std::vector<double>(img.size()), std::vector<double>(img.size())};
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      long gx = 0, gy = 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const long v = img.at(mirror(y + i - 1, h), mirror(x + j - 1, w));
          gx += kx[i][j] * v;
          gy += kx[j][i] * v;
        }
      e.g[y * w + x] = std::hypot(double(gx), double(gy));
      // Orientation folded into (-pi/2, pi/2]; vertical when gx = 0.
      double ang = std::numbers::pi / 2;
      if (gx != 0) {
        ang = std::atan2(double(gy), double(gx));
        if (ang > std::numbers::pi / 2) ang -= std::numbers::pi;
        if (ang < -std::numbers::pi / 2) ang += std::numbers::pi;
      }
      e.a[y * w + x] = ang;
    }
  return e;
}

inline double qabf(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  const Edges ea = sobel(a), eb = sobel(b), ef = sobel(f);
  auto q = [&](const Edges& s, std::size_t i) {
    double g = 0.0;
    if (s.g[i] > 0 || ef.g[i] > 0) g = s.g[i] > ef.g[i] ? ef.g[i] / s.g[i] : s.g[i] / ef.g[i];
    const double al = 1.0 - std::fabs(s.a[i] - ef.a[i]) * 2.0 / std::numbers::pi;
    const double qg = 0.9994 / (1.0 + std::exp(-15.0 * (g - 0.5)));
    const double qa = 0.9879 / (1.0 + std::exp(-22.0 * (al - 0.8)));
    return qg * qa;
  };
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (ea.g[i] == 0 && eb.g[i] == 0) continue;
    num += q(ea, i) * ea.g[i] + q(eb, i) * eb.g[i];
    den += ea.g[i] + eb.g[i];
  }
  return den == 0.0 ? 0.0 : std::clamp(num / den, 0.0, 1.0);
}

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const GrayImage8& img) {
  Grid g(img.height, std::vector<double>(img.width));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) g[y][x] = img.at(y, x);
  return g;
}

inline Grid window(int n) {
  const double sigma = n / 5.0, c = (n - 1) / 2.0;
  Grid w(n, std::vector<double>(n));
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      sum += w[i][j];
    }
  for (auto& row : w)
    for (double& v : row) v /= sum;
  return w;
}

// 2-D 'valid' correlation with a square window.
inline Grid filter(const Grid& in, const Grid& w) {
  const std::size_t n = w.size();
  if (in.empty() || in.size() < n || in[0].size() < n) return {};
  Grid out(in.size() - n + 1, std::vector<double>(in[0].size() - n + 1, 0.0));
  for (std::size_t y = 0; y < out.size(); ++y)
    for (std::size_t x = 0; x < out[0].size(); ++x)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[y][x] += w[i][j] * in[y + i][x + j];
  return out;
}

inline Grid decimate(const Grid& in) {
  Grid out;
  for (std::size_t y = 0; y < in.size(); y += 2) {
    out.emplace_back();
    for (std::size_t x = 0; x < in[0].size(); x += 2) out.back().push_back(in[y][x]);
  }
  return out;
}

inline Grid times(const Grid& a, const Grid& b) {
  Grid out = a;
  for (std::size_t y = 0; y < a.size(); ++y)
    for (std::size_t x = 0; x < a[0].size(); ++x) out[y][x] = a[y][x] * b[y][x];
  return out;
}

inline double vif_single(const GrayImage8& reference, const GrayImage8& distorted) {
  Grid r = to_grid(reference), d = to_grid(distorted);
  double num = 0.0, den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const Grid w = window((1 << (5 - scale)) + 1);
    if (scale > 1) {
      r = filter(r, w);
      d = filter(d, w);
      if (r.empty()) break;
      r = decimate(r);
      d = decimate(d);
    }
    const Grid mr = filter(r, w);
    if (mr.empty()) break;
    const Grid md = filter(d, w), rr = filter(times(r, r), w), dd = filter(times(d, d), w),
               rd = filter(times(r, d), w);
    for (std::size_t y = 0; y < mr.size(); ++y)
      for (std::size_t x = 0; x < mr[0].size(); ++x) {
        double s1 = std::max(rr[y][x] - mr[y][x] * mr[y][x], 0.0);
        const double s2 = std::max(dd[y][x] - md[y][x] * md[y][x], 0.0);
        const double s12 = rd[y][x] - mr[y][x] * md[y][x];
        double g = s12 / (s1 + 1e-10);
        double sv = s2 - g * s12;
        if (s1 < 1e-10) {
          g = 0.0;
          sv = s2;
          s1 = 0.0;
        }
        if (s2 < 1e-10) g = sv = 0.0;
        if (g < 0.0) {
          sv = s2;
          g = 0.0;
        }
        if (sv < 1e-10) sv = 1e-10;
        num += std::log10(1.0 + g * g * s1 / (sv + 2.0));
        den += std::log10(1.0 + s1 / 2.0);
      }
  }
  return den == 0.0 ? 0.0 : num / den;
}

inline double vif(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f) {
  return naive::vif_single(a, f) + naive::vif_single(b, f);
}

}  // namespace naive

namespace naive_inputs {


inline GrayImage8 make(std::size_t h, std::size_t w, std::uint8_t fill = 0) {
  return {w, h, std::vector<std::uint8_t>(h * w, fill)};
}

inline GrayImage8 random_image(std::mt19937_64& gen, std::size_t n = 32, int lo = 0, int hi = 255) {
  std::uniform_int_distribution<int> d(lo, hi);
  GrayImage8 img = make(n, n);
  for (auto& p : img.pixels) p = std::uint8_t(d(gen));
  return img;
}

// Smooth random field plus noise: exercises the correlated branches of VIF and Qabf.
inline GrayImage8 smooth_image(std::mt19937_64& gen, std::size_t n = 32) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 0.05 + 0.3 * u(gen), fy = 0.05 + 0.3 * u(gen), ph = 6.0 * u(gen);
  GrayImage8 img = make(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double v = 128 + 90 * std::sin(fx * x + fy * y + ph) + 20 * (u(gen) - 0.5);
      img.pixels[y * n + x] = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
    }
  return img;
}

inline GrayImage8 blend(const GrayImage8& a, const GrayImage8& b, double t, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  GrayImage8 out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    out.pixels[i] = std::uint8_t(
        std::clamp(std::lround(t * a.pixels[i] + (1 - t) * b.pixels[i] + u(gen)), 0L, 255L));
  return out;
}

struct Triple {
  GrayImage8 a, b, f;
};

inline std::vector<Triple> random_triples(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<Triple> out;
  for (int i = 0; i < 50; ++i) {
    if (i % 2 == 0) {
      out.push_back({random_image(gen), random_image(gen), random_image(gen)});
    } else {
      GrayImage8 a = smooth_image(gen), b = smooth_image(gen);
      GrayImage8 f = blend(a, b, 0.3 + 0.4 * (i % 5) / 4.0, gen);
      out.push_back({a, b, f});
    }
  }
  return out;
}

}  // namespace naive_inputs
