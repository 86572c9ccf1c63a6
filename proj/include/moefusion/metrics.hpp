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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moefusion/imageio.hpp"

namespace moefusion {

// Fixed column order of every report.
struct MetricValues {
  double en = 0.0;
  double sf = 0.0;
  double sd = 0.0;
  double mi = 0.0;
  double vif = 0.0;
  double ag = 0.0;
  double scd = 0.0;
  double qabf = 0.0;

  std::array<double, 8> as_array() const { return {en, sf, sd, mi, vif, ag, scd, qabf}; }
  bool all_finite() const;
};

inline constexpr const char* kMetricNames[8] = {"EN", "SF", "SD", "MI", "VIF", "AG", "SCD", "Qabf"};

enum class Region { kFull, kForeground, kBackground };
std::string to_string(Region r);

struct MetricReport {
  std::string pair;
  Region region = Region::kFull;
  MetricValues values;
};

// Qabf constants (Xydeas-Petrovic).
struct QabfParams {
  double gamma_g = 0.9994;
  double k_g = -15.0;
  double sigma_g = 0.5;
  double gamma_a = 0.9879;
  double k_a = -22.0;
  double sigma_a = 0.8;
};

inline constexpr int kVifScales = 4;
inline constexpr double kVifNoiseVariance = 2.0;
inline constexpr double kVifVarianceFloor = 1e-10;

// F: fused; A: visible gray; B: infrared. All images must share a size.
double entropy(const GrayImage8& f);
double spatial_frequency(const GrayImage8& f);
double std_dev(const GrayImage8& f);
double mutual_information(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f);
double avg_gradient(const GrayImage8& f);
double scd(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f);
double qabf(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f,
            const QabfParams& params = {});
double vif(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f);

// Pixel-domain multi-scale VIF of `distorted` against `reference`.
// Scales whose valid filtering region is empty contribute nothing; a
// reference with zero information (denominator 0) yields 0.
double vif_single(const GrayImage8& reference, const GrayImage8& distorted);

// Pearson correlation; 0 when either operand has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

MetricValues compute_metrics(const GrayImage8& a, const GrayImage8& b, const GrayImage8& f);

// Zeroes pixels outside (keep_foreground) or inside the binary mask.
GrayImage8 apply_mask(const GrayImage8& img, const Tensor& mask, bool keep_foreground);

// Foreground report on background-zeroed images, background report on
// foreground-zeroed images.
std::pair<MetricValues, MetricValues> masked_metrics(const GrayImage8& a, const GrayImage8& b,
                                                     const GrayImage8& f, const Tensor& mask);

// Fixed-order arithmetic mean.
MetricValues aggregate(std::span<const MetricValues> values);

}  // namespace moefusion
