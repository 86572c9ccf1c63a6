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

#include "moefusion/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "moefusion/error.hpp"
#include "moefusion/imageio.hpp"

namespace moefusion {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(RecordKind kind, const std::string& name, std::uint64_t aux, const Tensor& t) {
    u8(static_cast<std::uint8_t>(kind));
    str32(name);
    u64(aux);
    const Shape s = t.shape();
    u64(s.n);
    u64(s.c);
    u64(s.h);
    u64(s.w);
    for (double v : t.values()) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n)
      fail(ErrorCode::kFormat, "checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  require(dst.shape() == src.shape(), ErrorCode::kFormat,
          "checkpoint tensor '" + name + "' has shape " + to_string(src.shape()) +
              ", model expects " + to_string(dst.shape()));
  dst = src;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const FusionModel& model, std::uint64_t step) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const std::string cfg = model.config().to_text();
  w.u64(cfg.size());
  w.bytes(cfg.data(), cfg.size());
  w.u64(step);
  const auto& params = model.params();
  const auto buffers = model.buffers();
  w.u64(params.size() * 3 + buffers.size());
  for (const auto& name : params.names()) {
    const AdamState& st = params.state(name);
    w.tensor(RecordKind::kParameter, name, st.step, params.get(name).value());
    w.tensor(RecordKind::kFirstMoment, name, 0, st.first_moment);
    w.tensor(RecordKind::kSecondMoment, name, 0, st.second_moment);
  }
  for (const auto& [name, t] : buffers) w.tensor(RecordKind::kBuffer, name, 0, *t);
  return w.take();
}

LoadedModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::string magic = r.str(sizeof kCheckpointMagic);
  require(std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) == 0,
          ErrorCode::kFormat, "not a moefusion checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  FusionConfig cfg;
  cfg.merge_text(r.str(r.u64()));
  LoadedModel out{std::make_unique<FusionModel>(cfg), r.u64()};
  FusionModel& model = *out.model;
  auto buffers = model.buffers();

  const std::uint64_t count = r.u64();
  require(count == model.params().size() * 3 + buffers.size(), ErrorCode::kFormat,
          "checkpoint holds " + std::to_string(count) + " records, model expects " +
              std::to_string(model.params().size() * 3 + buffers.size()));
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto kind = static_cast<RecordKind>(r.u8());
    const std::string name = r.str(r.u32());
    const std::uint64_t aux = r.u64();
    Shape s;
    s.n = r.u64();
    s.c = r.u64();
    s.h = r.u64();
    s.w = r.u64();
    r.need(s.numel() * 8);
    std::vector<double> data(s.numel());
    for (auto& v : data) v = r.f64();
    const Tensor t(s, std::move(data));
    switch (kind) {
      case RecordKind::kParameter:
        require(model.params().contains(name), ErrorCode::kFormat,
                "checkpoint parameter '" + name + "' unknown to this model");
        copy_into(model.params().get(name).node()->value, t, name);
        model.params().state(name).step = aux;
        break;
      case RecordKind::kFirstMoment:
        copy_into(model.params().state(name).first_moment, t, name);
        break;
      case RecordKind::kSecondMoment:
        copy_into(model.params().state(name).second_moment, t, name);
        break;
      case RecordKind::kBuffer: {
        auto it = buffers.find(name);
        require(it != buffers.end(), ErrorCode::kFormat,
                "checkpoint buffer '" + name + "' unknown to this model");
        copy_into(*it->second, t, name);
        break;
      }
      default:
        fail(ErrorCode::kFormat, "checkpoint record '" + name + "' has unknown kind");
    }
  }
  require(r.done(), ErrorCode::kFormat,
          "trailing bytes after checkpoint records at byte " + std::to_string(r.pos()));
  return out;
}

void save_checkpoint(const std::string& path, const FusionModel& model, std::uint64_t step) {
  write_file_bytes(path, serialize_checkpoint(model, step));
}

LoadedModel load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

}  // namespace moefusion
