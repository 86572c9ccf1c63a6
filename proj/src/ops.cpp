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

#include "moefusion/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "moefusion/error.hpp"

namespace moefusion {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline std::size_t reflect(long i, long n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool is_scalar(const Shape& s) { return s.numel() == 1; }

void check_same(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShape,
          std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
              to_string(b.shape()));
}

// Result shape of a binary op allowing scalar broadcast on either side.
Shape binary_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar(b.shape())) return a.shape();
  if (is_scalar(a.shape())) return b.shape();
  check_same(a, b, op);
  return a.shape();
}

using StrideMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStrideMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Geometry of a same-size convolution evaluated on the padded grid. Output
// pixel (y, x) lives at column y * pw + x of a "wide" row of length
// (h - 1) * pw + w; input tap (ki, kj) is then the padded plane shifted by
// ki * pw + kj, so every tap is a plain strided GEMM.
struct PadGeometry {
  std::size_t h, w, kh, kw, ph, pw_, padded_h, padded_w;

  PadGeometry(std::size_t h_, std::size_t w_, std::size_t kh_, std::size_t kw_)
      : h(h_), w(w_), kh(kh_), kw(kw_), ph(kh_ / 2), pw_(kw_ / 2),
        padded_h(h_ + 2 * (kh_ / 2)), padded_w(w_ + 2 * (kw_ / 2)) {}

  std::size_t plane() const { return padded_h * padded_w; }
  std::size_t wide() const { return (h - 1) * padded_w + w; }
  std::size_t tap_offset(std::size_t ki, std::size_t kj) const { return ki * padded_w + kj; }
};

void pad_reflect(const double* in, std::size_t c, const PadGeometry& g, double* out) {
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in + ch * g.h * g.w;
    double* dst = out + ch * g.plane();
    for (std::size_t py = 0; py < g.padded_h; ++py) {
      const double* row = src + reflect(static_cast<long>(py) - static_cast<long>(g.ph), H) * g.w;
      double* drow = dst + py * g.padded_w;
      for (std::size_t px = 0; px < g.pw_; ++px)
        drow[px] = row[reflect(static_cast<long>(px) - static_cast<long>(g.pw_), W)];
      std::copy_n(row, g.w, drow + g.pw_);
      for (std::size_t px = g.pw_ + g.w; px < g.padded_w; ++px)
        drow[px] = row[reflect(static_cast<long>(px) - static_cast<long>(g.pw_), W)];
    }
  }
}

// Adjoint of pad_reflect: folds padded gradients back onto the source pixels.
void unpad_reflect_add(const double* padded, std::size_t c, const PadGeometry& g, double* out) {
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = padded + ch * g.plane();
    double* dst = out + ch * g.h * g.w;
    for (std::size_t py = 0; py < g.padded_h; ++py) {
      double* row = dst + reflect(static_cast<long>(py) - static_cast<long>(g.ph), H) * g.w;
      const double* srow = src + py * g.padded_w;
      for (std::size_t px = 0; px < g.padded_w; ++px)
        row[reflect(static_cast<long>(px) - static_cast<long>(g.pw_), W)] += srow[px];
    }
  }
}

// Weight (o, c, kh, kw) regrouped as kh*kw contiguous (o, c) matrices.
std::vector<double> weight_by_tap(const Tensor& w) {
  const Shape s = w.shape();
  const std::size_t taps = s.h * s.w;
  std::vector<double> out(s.numel());
  for (std::size_t o = 0; o < s.n; ++o)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t t = 0; t < taps; ++t)
        out[(t * s.n + o) * s.c + c] = w[(o * s.c + c) * taps + t];
  return out;
}

template <typename F, typename G>
Var unary(const Var& x, F forward, G derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return make_result(std::move(out), {x}, [derivative](Node& self) {
    if (!wants_grad(self, 0)) return;
    const Tensor& in = self.inputs[0]->value;
    Tensor& gi = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < in.size(); ++i)
      gi[i] += self.grad[i] * derivative(in[i], self.value[i]);
  });
}

// Adds `g` into `target`, summing when `target` is a broadcast scalar.
void accumulate_broadcast(Node& target, const Tensor& g, double factor) {
  Tensor& buf = target.grad_buffer();
  if (buf.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += factor * g[i];
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
    buf[0] += factor * s;
  }
}

inline double broadcast_at(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

}  // namespace

BatchNormStats BatchNormStats::fresh(std::size_t channels) {
  return {Tensor::zeros({1, channels, 1, 1}), Tensor::ones({1, channels, 1, 1})};
}

Var conv2d(const Var& input, const Var& weight, const Var& bias) {
  const Shape xs = input.shape(), ws = weight.shape();
  require(ws.h % 2 == 1 && ws.w % 2 == 1, ErrorCode::kShape,
          "conv2d: kernel size must be odd, got " + std::to_string(ws.h) + "x" +
              std::to_string(ws.w));
  require(xs.c == ws.c, ErrorCode::kShape,
          "conv2d: input channels " + std::to_string(xs.c) + " != weight in_ch " +
              std::to_string(ws.c));
  require(bias.shape() == Shape{1, ws.n, 1, 1}, ErrorCode::kShape,
          "conv2d: bias shape " + to_string(bias.shape()) + " does not match out_ch " +
              std::to_string(ws.n));
  require(xs.h > ws.h / 2 && xs.w > ws.w / 2, ErrorCode::kShape,
          "conv2d: spatial size " + std::to_string(xs.h) + "x" + std::to_string(xs.w) +
              " too small for reflect padding of kernel " + std::to_string(ws.h) + "x" +
              std::to_string(ws.w));

  const std::size_t out_ch = ws.n, hw = xs.plane();
  Tensor out({xs.n, out_ch, xs.h, xs.w});
  if (ws.h == 1 && ws.w == 1) {
    ConstMapMat wm(weight.value().data(), out_ch, xs.c);
    for (std::size_t n = 0; n < xs.n; ++n) {
      MapMat y(out.data() + n * out_ch * hw, out_ch, hw);
      y.noalias() = wm * ConstMapMat(input.value().data() + n * xs.sample(), xs.c, hw);
      for (std::size_t o = 0; o < out_ch; ++o) y.row(o).array() += bias.value()[o];
    }
  } else {
    const PadGeometry g(xs.h, xs.w, ws.h, ws.w);
    const std::vector<double> taps = weight_by_tap(weight.value());
    std::vector<double> padded(xs.c * g.plane());
    RowMat wide(out_ch, g.wide());
    for (std::size_t n = 0; n < xs.n; ++n) {
      pad_reflect(input.value().data() + n * xs.sample(), xs.c, g, padded.data());
      wide.setZero();
      for (std::size_t ki = 0; ki < ws.h; ++ki)
        for (std::size_t kj = 0; kj < ws.w; ++kj) {
          const std::size_t t = ki * ws.w + kj;
          wide.noalias() += ConstMapMat(taps.data() + t * out_ch * xs.c, out_ch, xs.c) *
                            ConstStrideMap(padded.data() + g.tap_offset(ki, kj), xs.c, g.wide(),
                                           Eigen::OuterStride<>(g.plane()));
        }
      for (std::size_t o = 0; o < out_ch; ++o) {
        double* dst = out.data() + (n * out_ch + o) * hw;
        const double b = bias.value()[o];
        for (std::size_t y = 0; y < xs.h; ++y)
          for (std::size_t x = 0; x < xs.w; ++x) dst[y * xs.w + x] = wide(o, y * g.padded_w + x) + b;
      }
    }
  }

  return make_result(std::move(out), {input, weight, bias}, [](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    const Tensor& w = self.inputs[1]->value;
    const Shape xs = x.shape(), ws = w.shape();
    const std::size_t out_ch = ws.n, hw = xs.plane();
    const bool gx = wants_grad(self, 0), gw = wants_grad(self, 1), gb = wants_grad(self, 2);
    if (gb) {
      Tensor& db = self.inputs[2]->grad_buffer();
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t o = 0; o < out_ch; ++o) {
          const double* dy = self.grad.data() + (n * out_ch + o) * hw;
          double s = 0.0;
          for (std::size_t i = 0; i < hw; ++i) s += dy[i];
          db[o] += s;
        }
    }
    if (!gx && !gw) return;
    if (ws.h == 1 && ws.w == 1) {
      ConstMapMat wm(w.data(), out_ch, xs.c);
      for (std::size_t n = 0; n < xs.n; ++n) {
        ConstMapMat dy(self.grad.data() + n * out_ch * hw, out_ch, hw);
        if (gw)
          MapMat(self.inputs[1]->grad_buffer().data(), out_ch, xs.c).noalias() +=
              dy * ConstMapMat(x.data() + n * xs.sample(), xs.c, hw).transpose();
        if (gx)
          MapMat(self.inputs[0]->grad_buffer().data() + n * xs.sample(), xs.c, hw).noalias() +=
              wm.transpose() * dy;
      }
      return;
    }
    const PadGeometry g(xs.h, xs.w, ws.h, ws.w);
    const std::size_t ntaps = ws.h * ws.w;
    const std::vector<double> taps = weight_by_tap(w);
    std::vector<double> dtaps(gw ? ntaps * out_ch * xs.c : 0, 0.0);
    std::vector<double> padded(xs.c * g.plane()), dpadded(gx ? xs.c * g.plane() : 0);
    RowMat dwide = RowMat::Zero(out_ch, g.wide());
    for (std::size_t n = 0; n < xs.n; ++n) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double* dy = self.grad.data() + (n * out_ch + o) * hw;
        for (std::size_t y = 0; y < xs.h; ++y)
          for (std::size_t xx = 0; xx < xs.w; ++xx) dwide(o, y * g.padded_w + xx) = dy[y * xs.w + xx];
      }
      if (gw) pad_reflect(x.data() + n * xs.sample(), xs.c, g, padded.data());
      if (gx) std::fill(dpadded.begin(), dpadded.end(), 0.0);
      for (std::size_t ki = 0; ki < ws.h; ++ki)
        for (std::size_t kj = 0; kj < ws.w; ++kj) {
          const std::size_t t = ki * ws.w + kj, off = g.tap_offset(ki, kj);
          if (gw)
            MapMat(dtaps.data() + t * out_ch * xs.c, out_ch, xs.c).noalias() +=
                dwide * ConstStrideMap(padded.data() + off, xs.c, g.wide(),
                                       Eigen::OuterStride<>(g.plane()))
                            .transpose();
          if (gx)
            StrideMap(dpadded.data() + off, xs.c, g.wide(), Eigen::OuterStride<>(g.plane()))
                .noalias() +=
                ConstMapMat(taps.data() + t * out_ch * xs.c, out_ch, xs.c).transpose() * dwide;
        }
      if (gx)
        unpad_reflect_add(dpadded.data(), xs.c, g,
                          self.inputs[0]->grad_buffer().data() + n * xs.sample());
    }
    if (gw) {
      Tensor& dw = self.inputs[1]->grad_buffer();
      for (std::size_t o = 0; o < out_ch; ++o)
        for (std::size_t c = 0; c < xs.c; ++c)
          for (std::size_t t = 0; t < ntaps; ++t)
            dw[(o * xs.c + c) * ntaps + t] += dtaps[(t * out_ch + o) * xs.c + c];
    }
  });
}

Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, BatchNormStats& stats,
                BatchNormMode mode) {
  const Shape xs = input.shape();
  const Shape ps{1, xs.c, 1, 1};
  require(gamma.shape() == ps && beta.shape() == ps, ErrorCode::kShape,
          "batchnorm2d: gamma/beta must have " + std::to_string(xs.c) + " channels");
  require(stats.running_mean.shape() == ps && stats.running_var.shape() == ps, ErrorCode::kShape,
          "batchnorm2d: running stats must have " + std::to_string(xs.c) + " channels");
  const std::size_t m = xs.n * xs.plane();
  require(m > 0, ErrorCode::kShape, "batchnorm2d: channel has zero elements");

  Tensor mean(ps), invstd(ps);
  if (mode == BatchNormMode::kTrain) {
    for (std::size_t c = 0; c < xs.c; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t i = 0; i < xs.plane(); ++i) s += input.value().at(n, c, 0, 0 + i);
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t i = 0; i < xs.plane(); ++i) {
          const double d = input.value().at(n, c, 0, i) - mu;
          v += d * d;
        }
      const double var = v / static_cast<double>(m);
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + kBatchNormEps);
      const double unbiased = m > 1 ? v / static_cast<double>(m - 1) : var;
      stats.running_mean[c] =
          (1.0 - kBatchNormMomentum) * stats.running_mean[c] + kBatchNormMomentum * mu;
      stats.running_var[c] =
          (1.0 - kBatchNormMomentum) * stats.running_var[c] + kBatchNormMomentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < xs.c; ++c) {
      mean[c] = stats.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(stats.running_var[c] + kBatchNormEps);
    }
  }

  Tensor xhat(xs), out(xs);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t i = 0; i < xs.plane(); ++i) {
        const double h = (input.value().at(n, c, 0, i) - mean[c]) * invstd[c];
        xhat.at(n, c, 0, i) = h;
        out.at(n, c, 0, i) = gamma.value()[c] * h + beta.value()[c];
      }

  const bool train = mode == BatchNormMode::kTrain;
  return make_result(std::move(out), {input, gamma, beta},
                     [xhat = std::move(xhat), invstd = std::move(invstd), train, m](Node& self) {
    const Shape xs = self.value.shape();
    const Tensor& gam = self.inputs[1]->value;
    for (std::size_t c = 0; c < xs.c; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t i = 0; i < xs.plane(); ++i) {
          const double dy = self.grad.at(n, c, 0, i);
          sum_dy += dy;
          sum_dy_xhat += dy * xhat.at(n, c, 0, i);
        }
      if (wants_grad(self, 1)) self.inputs[1]->grad_buffer()[c] += sum_dy_xhat;
      if (wants_grad(self, 2)) self.inputs[2]->grad_buffer()[c] += sum_dy;
      if (!wants_grad(self, 0)) continue;
      Tensor& gx = self.inputs[0]->grad_buffer();
      const double scale = gam[c] * invstd[c];
      const double md = static_cast<double>(m);
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t i = 0; i < xs.plane(); ++i) {
          const double dy = self.grad.at(n, c, 0, i);
          if (train) {
            gx.at(n, c, 0, i) +=
                scale * (dy - sum_dy / md - xhat.at(n, c, 0, i) * sum_dy_xhat / md);
          } else {
            gx.at(n, c, 0, i) += scale * dy;
          }
        }
    }
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double out) { return 1.0 - out * out; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::fabs(v); }, [](double in, double) { return sign(in); });
}

Var add(const Var& a, const Var& b) {
  const Shape s = binary_shape(a, b, "add");
  Tensor out(s);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = broadcast_at(a.value(), i) + broadcast_at(b.value(), i);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) accumulate_broadcast(*self.inputs[0], self.grad, 1.0);
    if (wants_grad(self, 1)) accumulate_broadcast(*self.inputs[1], self.grad, 1.0);
  });
}

Var sub(const Var& a, const Var& b) {
  const Shape s = binary_shape(a, b, "sub");
  Tensor out(s);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = broadcast_at(a.value(), i) - broadcast_at(b.value(), i);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) accumulate_broadcast(*self.inputs[0], self.grad, 1.0);
    if (wants_grad(self, 1)) accumulate_broadcast(*self.inputs[1], self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  const Shape s = binary_shape(a, b, "mul");
  Tensor out(s);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = broadcast_at(a.value(), i) * broadcast_at(b.value(), i);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    Tensor g(self.grad.shape());
    if (wants_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * broadcast_at(bv, i);
      accumulate_broadcast(*self.inputs[0], g, 1.0);
    }
    if (wants_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * broadcast_at(av, i);
      accumulate_broadcast(*self.inputs[1], g, 1.0);
    }
  });
}

Var max_elementwise(const Var& a, const Var& b) {
  check_same(a, b, "max_elementwise");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.value()[i], b.value()[i]);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) self.inputs[0]->grad_buffer()[i] += self.grad[i];
      } else if (gb) {
        self.inputs[1]->grad_buffer()[i] += self.grad[i];
      }
    }
  });
}

Var mean_elementwise(const Var& a, const Var& b) { return mul_scalar(add(a, b), 0.5); }

Var add_scalar(const Var& x, double s) {
  return unary(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& x, double s) {
  return unary(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var one_minus(const Var& x) {
  return unary(
      x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kShape, "concat_channels: no inputs");
  const Shape first = parts[0].shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    require(p.shape().n == first.n && p.shape().h == first.h && p.shape().w == first.w,
            ErrorCode::kShape,
            "concat_channels: shape " + to_string(p.shape()) + " incompatible with " +
                to_string(first));
    channels += p.shape().c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  Tensor out(os);
  const std::size_t hw = first.plane();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape().c * hw;
    for (std::size_t n = 0; n < first.n; ++n)
      std::copy_n(p.value().data() + n * block, block, out.data() + n * os.sample() + offset);
    offset += block;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), [](Node& self) {
    const Shape os = self.value.shape();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t block = self.inputs[k]->value.shape().c * os.plane();
      if (wants_grad(self, k)) {
        Tensor& g = self.inputs[k]->grad_buffer();
        for (std::size_t n = 0; n < os.n; ++n) {
          const double* src = self.grad.data() + n * os.sample() + offset;
          double* dst = g.data() + n * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += block;
    }
  });
}

Var flatten(const Var& x) {
  const Shape s = x.shape();
  Tensor out({s.n, s.sample(), 1, 1}, x.value().vector());
  return make_result(std::move(out), {x}, [](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean_all(const Var& x) {
  require(x.value().size() > 0, ErrorCode::kShape, "mean_all: empty tensor");
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var l1_mean(const Var& a, const Var& b) {
  check_same(a, b, "l1_mean");
  const std::size_t n = a.value().size();
  require(n > 0, ErrorCode::kShape, "l1_mean: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(a.value()[i] - b.value()[i]);
  return make_result(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [n](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const double scale = self.grad[0] / static_cast<double>(n);
    const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = sign(av[i] - bv[i]) * scale;
      if (ga) self.inputs[0]->grad_buffer()[i] += d;
      if (gb) self.inputs[1]->grad_buffer()[i] -= d;
    }
  });
}

Var mul_channel_broadcast(const Var& x, const Var& map) {
  const Shape xs = x.shape(), ms = map.shape();
  require(ms.c == 1 && ms.n == xs.n && ms.h == xs.h && ms.w == xs.w, ErrorCode::kShape,
          "mul_channel_broadcast: map " + to_string(ms) + " cannot broadcast over " +
              to_string(xs));
  Tensor out(xs);
  const std::size_t hw = xs.plane();
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t i = 0; i < hw; ++i)
        out.at(n, c, 0, i) = x.value().at(n, c, 0, i) * map.value()[n * hw + i];
  return make_result(std::move(out), {x, map}, [](Node& self) {
    const Shape xs = self.value.shape();
    const std::size_t hw = xs.plane();
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& mv = self.inputs[1]->value;
    const bool gx = wants_grad(self, 0), gm = wants_grad(self, 1);
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t c = 0; c < xs.c; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          const double g = self.grad.at(n, c, 0, i);
          if (gx) self.inputs[0]->grad_buffer().at(n, c, 0, i) += g * mv[n * hw + i];
          if (gm) self.inputs[1]->grad_buffer()[n * hw + i] += g * xv.at(n, c, 0, i);
        }
  });
}

Var channel_max(const Var& x) {
  const Shape xs = x.shape();
  require(xs.c >= 1, ErrorCode::kShape, "channel_max: no channels");
  const std::size_t hw = xs.plane();
  Tensor out({xs.n, 1, xs.h, xs.w});
  std::vector<std::size_t> argmax(xs.n * hw, 0);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < xs.c; ++c)
        if (x.value().at(n, c, 0, i) > x.value().at(n, best, 0, i)) best = c;
      argmax[n * hw + i] = best;
      out[n * hw + i] = x.value().at(n, best, 0, i);
    }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& g = self.inputs[0]->grad_buffer();
    const std::size_t hw = self.value.shape().plane();
    for (std::size_t j = 0; j < argmax.size(); ++j) {
      const std::size_t n = j / hw, i = j % hw;
      g.at(n, argmax[j], 0, i) += self.grad[j];
    }
  });
}

Var sobel_magnitude(const Var& x) {
  const Shape xs = x.shape();
  require(xs.c == 1, ErrorCode::kShape,
          "sobel_magnitude: expected single-channel input, got " + std::to_string(xs.c) +
              " channels");
  require(xs.h >= 2 && xs.w >= 2, ErrorCode::kShape,
          "sobel_magnitude: image must be at least 2x2");
  static constexpr double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  const long H = static_cast<long>(xs.h), W = static_cast<long>(xs.w);
  Tensor gx(xs), gy(xs), out(xs);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const double* in = x.value().data() + n * xs.plane();
    for (long y = 0; y < H; ++y)
      for (long xx = 0; xx < W; ++xx) {
        double v[3][3];
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            v[i][j] = in[reflect(y + i - 1, H) * xs.w + reflect(xx + j - 1, W)];
        // Positive and negative taps summed separately so flat patches give exactly 0.
        const double sx =
            (v[0][2] + 2.0 * v[1][2] + v[2][2]) - (v[0][0] + 2.0 * v[1][0] + v[2][0]);
        const double sy =
            (v[2][0] + 2.0 * v[2][1] + v[2][2]) - (v[0][0] + 2.0 * v[0][1] + v[0][2]);
        const std::size_t idx = n * xs.plane() + y * xs.w + xx;
        gx[idx] = sx;
        gy[idx] = sy;
        out[idx] = std::fabs(sx) + std::fabs(sy);
      }
  }
  return make_result(std::move(out), {x}, [gx = std::move(gx), gy = std::move(gy)](Node& self) {
    if (!wants_grad(self, 0)) return;
    const Shape xs = self.value.shape();
    const long H = static_cast<long>(xs.h), W = static_cast<long>(xs.w);
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < xs.n; ++n) {
      double* dst = g.data() + n * xs.plane();
      for (long y = 0; y < H; ++y)
        for (long xx = 0; xx < W; ++xx) {
          const std::size_t idx = n * xs.plane() + y * xs.w + xx;
          const double dx = self.grad[idx] * sign(gx[idx]);
          const double dy = self.grad[idx] * sign(gy[idx]);
          if (dx == 0.0 && dy == 0.0) continue;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              dst[reflect(y + i - 1, H) * xs.w + reflect(xx + j - 1, W)] +=
                  kx[i][j] * dx + ky[i][j] * dy;
        }
    }
  });
}

Var linear(const Var& s, const Var& weight) {
  const Shape ss = s.shape(), ws = weight.shape();
  require(ss.h == 1 && ss.w == 1 && ws.n == 1 && ws.c == 1, ErrorCode::kShape,
          "linear: expected s (batch, d, 1, 1) and weight (1, 1, d, n)");
  require(ss.c == ws.h, ErrorCode::kShape,
          "linear: feature length " + std::to_string(ss.c) + " != gate input dimension " +
              std::to_string(ws.h));
  Tensor out({ss.n, ws.w, 1, 1});
  MapMat(out.data(), ss.n, ws.w).noalias() =
      ConstMapMat(s.value().data(), ss.n, ss.c) * ConstMapMat(weight.value().data(), ws.h, ws.w);
  return make_result(std::move(out), {s, weight}, [](Node& self) {
    const Shape ss = self.inputs[0]->value.shape(), ws = self.inputs[1]->value.shape();
    ConstMapMat dl(self.grad.data(), ss.n, ws.w);
    if (wants_grad(self, 0)) {
      MapMat(self.inputs[0]->grad_buffer().data(), ss.n, ss.c).noalias() +=
          dl * ConstMapMat(self.inputs[1]->value.data(), ws.h, ws.w).transpose();
    }
    if (wants_grad(self, 1)) {
      MapMat(self.inputs[1]->grad_buffer().data(), ws.h, ws.w).noalias() +=
          ConstMapMat(self.inputs[0]->value.data(), ss.n, ss.c).transpose() * dl;
    }
  });
}

Var select_batch(const Var& x, std::span<const std::size_t> indices) {
  const Shape xs = x.shape();
  const std::size_t sample = xs.sample();
  Tensor out({indices.size(), xs.c, xs.h, xs.w});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    require(indices[k] < xs.n, ErrorCode::kShape,
            "select_batch: index " + std::to_string(indices[k]) + " out of batch " +
                std::to_string(xs.n));
    std::copy_n(x.value().data() + indices[k] * sample, sample, out.data() + k * sample);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out), {x}, [idx = std::move(idx), sample](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double* src = self.grad.data() + k * sample;
      double* dst = g.data() + idx[k] * sample;
      for (std::size_t i = 0; i < sample; ++i) dst[i] += src[i];
    }
  });
}

Var sum_batch(const Var& x) {
  const Shape xs = x.shape();
  const std::size_t sample = xs.sample();
  Tensor out({1, xs.c, xs.h, xs.w});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < sample; ++i) out[i] += x.value()[n * sample + i];
  return make_result(std::move(out), {x}, [](Node& self) {
    if (!wants_grad(self, 0)) return;
    Tensor& g = self.inputs[0]->grad_buffer();
    const std::size_t sample = self.value.size();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i % sample];
  });
}

Var moe_combine(std::span<const Var> outputs, std::span<const std::vector<std::size_t>> members,
                const Var& gates) {
  const std::size_t experts = outputs.size();
  const Shape gs = gates.shape();
  require(members.size() == experts && gs.c == experts && gs.h == 1 && gs.w == 1,
          ErrorCode::kShape, "moe_combine: gate vector does not match expert count");
  Shape sample_shape{};
  for (std::size_t e = 0; e < experts; ++e) {
    if (members[e].empty()) continue;
    require(outputs[e].defined() && outputs[e].shape().n == members[e].size(), ErrorCode::kShape,
            "moe_combine: expert " + std::to_string(e) + " output does not match its members");
    const Shape s = outputs[e].shape();
    if (sample_shape.numel() == 0) {
      sample_shape = {1, s.c, s.h, s.w};
    } else {
      require(s.c == sample_shape.c && s.h == sample_shape.h && s.w == sample_shape.w,
              ErrorCode::kShape, "moe_combine: experts disagree on output shape");
    }
  }
  require(sample_shape.numel() > 0, ErrorCode::kShape, "moe_combine: no expert selected");
  const std::size_t sample = sample_shape.sample();
  Tensor out({gs.n, sample_shape.c, sample_shape.h, sample_shape.w});
  for (std::size_t e = 0; e < experts; ++e)
    for (std::size_t k = 0; k < members[e].size(); ++k) {
      const std::size_t b = members[e][k];
      require(b < gs.n, ErrorCode::kShape, "moe_combine: member index out of batch");
      const double g = gates.value()[b * experts + e];
      const double* src = outputs[e].value().data() + k * sample;
      double* dst = out.data() + b * sample;
      for (std::size_t i = 0; i < sample; ++i) dst[i] += g * src[i];
    }

  // Input 0 is the gate tensor; input 1 + e the expert outputs (possibly null).
  std::vector<Var> inputs{gates};
  inputs.insert(inputs.end(), outputs.begin(), outputs.end());
  std::vector<std::vector<std::size_t>> mem(members.begin(), members.end());
  return make_result(std::move(out), std::move(inputs),
                     [mem = std::move(mem), sample, experts](Node& self) {
    const Tensor& gv = self.inputs[0]->value;
    for (std::size_t e = 0; e < experts; ++e) {
      if (mem[e].empty()) continue;
      const NodePtr& expert = self.inputs[1 + e];
      for (std::size_t k = 0; k < mem[e].size(); ++k) {
        const std::size_t b = mem[e][k];
        const double* dy = self.grad.data() + b * sample;
        const double* ev = expert->value.data() + k * sample;
        if (wants_grad(self, 0)) {
          double dot = 0.0;
          for (std::size_t i = 0; i < sample; ++i) dot += dy[i] * ev[i];
          self.inputs[0]->grad_buffer()[b * experts + e] += dot;
        }
        if (wants_grad(self, 1 + e)) {
          const double g = gv[b * experts + e];
          double* dst = expert->grad_buffer().data() + k * sample;
          for (std::size_t i = 0; i < sample; ++i) dst[i] += g * dy[i];
        }
      }
    }
  });
}

}  // namespace moefusion
