// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/conv.hpp"

#include <string>
#include <vector>

#include "forge/error.hpp"

namespace forge::tensor {

std::size_t ConvGeometry::out_extent(std::size_t in, std::size_t kernel) const {
  if (stride == 0 || kernel == 0) throw ShapeError("conv kernel and stride must be positive");
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("conv window " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

namespace {

struct Dims4 {
  std::size_t b, c, h, w;
};

template <typename T>
Dims4 nchw(const Tape<T>& tape, Var x) {
  const auto& s = tape.shape(x);
  if (s.size() != 4) throw ShapeError("expected NCHW input, got " + shape_str(s));
  return {s[0], s[1], s[2], s[3]};
}

}  // namespace

template <typename T>
Var im2col(Tape<T>& tape, Var x, const ConvGeometry& geo) {
  const Dims4 d = nchw(tape, x);
  const std::size_t oh = geo.out_extent(d.h, geo.kernel_h);
  const std::size_t ow = geo.out_extent(d.w, geo.kernel_w);
  const std::size_t kh = geo.kernel_h, kw = geo.kernel_w;
  const std::size_t cols = d.c * kh * kw;
  const std::size_t rows = d.b * oh * ow;
  // Source offset of every patch entry; -1 marks zero padding.
  auto source = std::make_shared<std::vector<std::int64_t>>(rows * cols, -1);
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t row = (b * oh + oy) * ow + ox;
        for (std::size_t c = 0; c < d.c; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto iy = static_cast<std::int64_t>(oy * geo.stride + ky) -
                            static_cast<std::int64_t>(geo.padding);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto ix = static_cast<std::int64_t>(ox * geo.stride + kx) -
                              static_cast<std::int64_t>(geo.padding);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::int64_t>(d.h) ||
                  ix >= static_cast<std::int64_t>(d.w)) {
                continue;
              }
              (*source)[row * cols + (c * kh + ky) * kw + kx] =
                  static_cast<std::int64_t>(((b * d.c + c) * d.h + iy) * d.w + ix);
            }
          }
        }
      }
    }
  }
  auto xv = tape.value(x);
  std::vector<T> out(rows * cols, T{0});
  for (std::size_t i = 0; i < out.size(); ++i) {
    if ((*source)[i] >= 0) out[i] = xv[(*source)[i]];
  }
  const Var self{tape.size()};
  return tape.record({rows, cols}, std::move(out), {x}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*source)[i] >= 0) gx[(*source)[i]] += g[i];
    }
  });
}

template <typename T>
Var rows_to_nchw(Tape<T>& tape, Var rows, std::size_t batch, std::size_t out_h,
                 std::size_t out_w) {
  const auto& s = tape.shape(rows);
  if (s.size() != 2 || s[0] != batch * out_h * out_w) {
    throw ShapeError("rows_to_nchw: " + shape_str(s) + " is not (" +
                     std::to_string(batch * out_h * out_w) + " x C)");
  }
  const std::size_t c = s[1], spatial = out_h * out_w;
  auto rv = tape.value(rows);
  std::vector<T> out(rv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < spatial; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(b * c + ch) * spatial + p] = rv[(b * spatial + p) * c + ch];
      }
    }
  }
  const Var self{tape.size()};
  return tape.record({batch, c, out_h, out_w}, std::move(out), {rows}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    auto gr = t.grad(rows);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t p = 0; p < spatial; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          gr[(b * spatial + p) * c + ch] += g[(b * c + ch) * spatial + p];
        }
      }
    }
  });
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, const ConvGeometry& geo,
           std::span<const std::uint8_t> mask, Var bias, WeightGrad grad_mode) {
  const Dims4 d = nchw(tape, x);
  const std::size_t oh = geo.out_extent(d.h, geo.kernel_h);
  const std::size_t ow = geo.out_extent(d.w, geo.kernel_w);
  Var patches = im2col(tape, x, geo);
  Var rows = masked_linear(tape, patches, w, mask, Var{}, grad_mode);
  Var y = rows_to_nchw(tape, rows, d.b, oh, ow);
  return bias.valid() ? add_bias(tape, y, bias) : y;
}

template <typename T>
Var conv2d_csr(Tape<T>& tape, Var x, Var w, const ConvGeometry& geo,
               std::shared_ptr<const CsrPattern> pattern, Var bias, WeightGrad grad_mode) {
  const Dims4 d = nchw(tape, x);
  const std::size_t oh = geo.out_extent(d.h, geo.kernel_h);
  const std::size_t ow = geo.out_extent(d.w, geo.kernel_w);
  Var patches = im2col(tape, x, geo);
  Var rows = csr_linear(tape, patches, w, std::move(pattern), Var{}, grad_mode);
  Var y = rows_to_nchw(tape, rows, d.b, oh, ow);
  return bias.valid() ? add_bias(tape, y, bias) : y;
}

template <typename T>
Var depthwise_conv2d(Tape<T>& tape, Var x, Var w, const ConvGeometry& geo,
                     std::span<const std::uint8_t> mask, Var bias, WeightGrad grad_mode) {
  const Dims4 d = nchw(tape, x);
  const std::size_t kh = geo.kernel_h, kw = geo.kernel_w, taps = kh * kw;
  if (tape.shape(w) != Shape{d.c, taps}) {
    throw ShapeError("depthwise weight " + shape_str(tape.shape(w)) + " for " +
                     std::to_string(d.c) + " channels and " + std::to_string(taps) + " taps");
  }
  if (!mask.empty() && mask.size() != d.c * taps) {
    throw ShapeError("depthwise mask size does not match the weight");
  }
  const std::size_t oh = geo.out_extent(d.h, kh);
  const std::size_t ow = geo.out_extent(d.w, kw);
  auto wv = tape.value(w);
  auto effective = std::make_shared<std::vector<T>>(wv.begin(), wv.end());
  std::shared_ptr<std::vector<std::uint8_t>> bitmap;
  std::uint64_t active = d.c * taps;
  if (!mask.empty()) {
    bitmap = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
    active = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) (*effective)[i] = T{0};
      active += mask[i] ? 1 : 0;
    }
  }
  // Visits every (output, tap) pair that lands inside the input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < d.b; ++b) {
      for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t o = ((b * d.c + c) * oh + oy) * ow + ox;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const auto iy = static_cast<std::int64_t>(oy * geo.stride + ky) -
                              static_cast<std::int64_t>(geo.padding);
              if (iy < 0 || iy >= static_cast<std::int64_t>(d.h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const auto ix = static_cast<std::int64_t>(ox * geo.stride + kx) -
                                static_cast<std::int64_t>(geo.padding);
                if (ix < 0 || ix >= static_cast<std::int64_t>(d.w)) continue;
                fn(o, ((b * d.c + c) * d.h + iy) * d.w + ix, c * taps + ky * kw + kx);
              }
            }
          }
        }
      }
    }
  };
  auto xv = tape.value(x);
  std::vector<T> out(d.b * d.c * oh * ow, T{0});
  for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { out[o] += xv[i] * (*effective)[k]; });
  tape.add_macs(static_cast<std::uint64_t>(d.b) * oh * ow * active);
  const Var self{tape.size()};
  Var y = tape.record({d.b, d.c, oh, ow}, std::move(out), {x, w}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    auto in = t.value(x);
    if (t.requires_grad(x)) {
      auto gx = t.grad(x);
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { gx[i] += g[o] * (*effective)[k]; });
    }
    if (t.requires_grad(w)) {
      std::vector<T> dw(d.c * taps, T{0});
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { dw[k] += g[o] * in[i]; });
      auto gw = t.grad(w);
      const bool keep_all = grad_mode == WeightGrad::dense || !bitmap;
      for (std::size_t k = 0; k < dw.size(); ++k) {
        if (keep_all || (*bitmap)[k]) gw[k] += dw[k];
      }
    }
  });
  return bias.valid() ? add_bias(tape, y, bias) : y;
}

#define FORGE_INSTANTIATE_CONV(T)                                                            \
  template Var im2col<T>(Tape<T>&, Var, const ConvGeometry&);                                \
  template Var rows_to_nchw<T>(Tape<T>&, Var, std::size_t, std::size_t, std::size_t);        \
  template Var conv2d<T>(Tape<T>&, Var, Var, const ConvGeometry&,                            \
                         std::span<const std::uint8_t>, Var, WeightGrad);                    \
  template Var conv2d_csr<T>(Tape<T>&, Var, Var, const ConvGeometry&,                        \
                             std::shared_ptr<const CsrPattern>, Var, WeightGrad);            \
  template Var depthwise_conv2d<T>(Tape<T>&, Var, Var, const ConvGeometry&,                  \
                                   std::span<const std::uint8_t>, Var, WeightGrad);

FORGE_INSTANTIATE_CONV(float)
FORGE_INSTANTIATE_CONV(double)

}  // namespace forge::tensor
