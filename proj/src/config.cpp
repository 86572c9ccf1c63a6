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

#include "moefusion/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "moefusion/error.hpp"

namespace moefusion {

namespace {

const std::vector<std::string>& keys() {
  static const std::vector<std::string> k{
      "num_experts", "top_k",  "alpha", "load_weight", "learning_rate",   "batch_size",
      "epochs",      "steps",  "height", "width",      "seed",            "mole_bg_variant",
      "variant",     "train_pairs"};
  return k;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), ErrorCode::kInvalidArgument,
          "config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), ErrorCode::kInvalidArgument,
          "config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  fail(ErrorCode::kInvalidArgument, "config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoMole: return "no_mole";
    case Variant::kNoMoge: return "no_moge";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_mole") return Variant::kNoMole;
  if (s == "no_moge") return Variant::kNoMoge;
  fail(ErrorCode::kInvalidArgument,
       "config: unknown variant '" + s + "' (expected full, no_mole, no_moge)");
}

void FusionConfig::validate() const {
  require(num_experts >= 2 && num_experts % 2 == 0, ErrorCode::kInvalidArgument,
          "config: num_experts must be even and >= 2, got " + std::to_string(num_experts));
  require(top_k >= 1 && top_k <= num_experts, ErrorCode::kInvalidArgument,
          "config: top_k must lie in [1, num_experts], got " + std::to_string(top_k));
  require(alpha > 0.0, ErrorCode::kInvalidArgument, "config: alpha must be > 0");
  require(load_weight >= 0.0, ErrorCode::kInvalidArgument, "config: load_weight must be >= 0");
  require(learning_rate >= 0.0, ErrorCode::kInvalidArgument,
          "config: learning_rate must be >= 0");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "config: batch_size must be >= 1");
  require(height >= 2 && width >= 2, ErrorCode::kInvalidArgument,
          "config: resolution must be at least 2x2");
  require(train_pairs >= 1, ErrorCode::kInvalidArgument, "config: train_pairs must be >= 1");
}

void FusionConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in), v = trim(value_in);
  if (key == "num_experts") num_experts = parse_unsigned<std::size_t>(key, v);
  else if (key == "top_k") top_k = parse_unsigned<std::size_t>(key, v);
  else if (key == "alpha") alpha = parse_double(key, v);
  else if (key == "load_weight") load_weight = parse_double(key, v);
  else if (key == "learning_rate") learning_rate = parse_double(key, v);
  else if (key == "batch_size") batch_size = parse_unsigned<std::size_t>(key, v);
  else if (key == "epochs") epochs = parse_unsigned<std::size_t>(key, v);
  else if (key == "steps") steps = parse_unsigned<std::size_t>(key, v);
  else if (key == "height") height = parse_unsigned<std::size_t>(key, v);
  else if (key == "width") width = parse_unsigned<std::size_t>(key, v);
  else if (key == "resolution") {
    const auto x = v.find('x');
    if (x == std::string::npos) {
      height = width = parse_unsigned<std::size_t>(key, v);
    } else {
      height = parse_unsigned<std::size_t>(key, v.substr(0, x));
      width = parse_unsigned<std::size_t>(key, v.substr(x + 1));
    }
  } else if (key == "seed") seed = parse_unsigned<std::uint64_t>(key, v);
  else if (key == "mole_bg_variant") mole_bg_variant = parse_bool(key, v);
  else if (key == "variant") variant = parse_variant(v);
  else if (key == "train_pairs") train_pairs = parse_unsigned<std::size_t>(key, v);
  else fail(ErrorCode::kInvalidArgument, "config: unknown key '" + key + "'");
}

std::string FusionConfig::get(const std::string& key) const {
  if (key == "num_experts") return std::to_string(num_experts);
  if (key == "top_k") return std::to_string(top_k);
  if (key == "alpha") return format_double(alpha);
  if (key == "load_weight") return format_double(load_weight);
  if (key == "learning_rate") return format_double(learning_rate);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "steps") return std::to_string(steps);
  if (key == "height") return std::to_string(height);
  if (key == "width") return std::to_string(width);
  if (key == "seed") return std::to_string(seed);
  if (key == "mole_bg_variant") return mole_bg_variant ? "true" : "false";
  if (key == "variant") return to_string(variant);
  if (key == "train_pairs") return std::to_string(train_pairs);
  fail(ErrorCode::kInvalidArgument, "config: unknown key '" + key + "'");
}

void FusionConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kFormat,
            "config line " + std::to_string(lineno) + ": expected 'key = value'");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void FusionConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str());
}

std::string FusionConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
  return out;
}

std::string FusionConfig::summary() const {
  std::string out;
  for (const auto& k : keys()) {
    if (!out.empty()) out += ' ';
    out += k + "=" + get(k);
  }
  return out;
}

}  // namespace moefusion
