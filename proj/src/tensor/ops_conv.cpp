#include <algorithm>
#include <stdexcept>
#include <string>

#include "bitforge/kernels.hpp"
#include "bitforge/ops.hpp"

namespace bitforge::ops {
namespace {

using tensor::Shape;

struct ConvGeometry {
  std::size_t n, c, h, w;    // input
  std::size_t o, kh, kw;     // filters
  std::size_t stride, pad;
  std::size_t oh, ow;        // output

  std::size_t in_plane() const { return h * w; }
  std::size_t out_plane() const { return oh * ow; }
  std::size_t patch() const { return c * kh * kw; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must be 4-D, got " +
                                tensor::to_string(t.shape()));
  }
}

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                       const char* op) {
  if (stride == 0) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  if (in + 2 * pad < k) {
    throw std::invalid_argument(std::string(op) + ": kernel larger than padded input");
  }
  return (in + 2 * pad - k) / stride + 1;
}

// Unfolds one sample into a (c*kh*kw) x (oh*ow) matrix.
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    const double* xc = x + c * g.in_plane();
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          double* dst = row + oy * g.ow;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back and accumulates into dx.
void col2im(const ConvGeometry& g, const double* col, double* dx) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    double* xc = dx + c * g.in_plane();
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = xc + static_cast<std::size_t>(iy) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding) {
  require_rank4(input, "conv2d", "input");
  require_rank4(weight, "conv2d", "weight");
  if (weight.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                " input channels, input has " + std::to_string(input.dim(1)));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0))) {
    throw std::invalid_argument("conv2d: bias must have shape [" +
                                std::to_string(weight.dim(0)) + "]");
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.o = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  g.oh = out_extent(g.h, g.kh, stride, padding, "conv2d");
  g.ow = out_extent(g.w, g.kw, stride, padding, "conv2d");

  const auto& kt = kernels::active();
  const std::size_t op = g.out_plane();
  std::vector<double> out(g.n * g.o * op, 0.0);
  std::vector<double> col(g.pointwise() ? 0 : g.patch() * op);
  const double* w = weight.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    double* y = out.data() + n * g.o * op;
    if (bias) {
      for (std::size_t o = 0; o < g.o; ++o) std::fill(y + o * op, y + (o + 1) * op, bias->data()[o]);
    }
    const double* x = input.data().data() + n * g.c * g.in_plane();
    const double* b = x;
    if (!g.pointwise()) {
      im2col(g, x, col.data());
      b = col.data();
    }
    kt.gemm_nn(g.o, op, g.patch(), w, g.patch(), b, op, y, op);
  }

  std::vector<Tensor> parents{input, weight};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias.has_value();
  return Tensor::from_op(
      "conv2d", {g.n, g.o, g.oh, g.ow}, std::move(out), std::move(parents),
      [g, has_bias](tensor::detail::Node& self) {
        const auto& kt = kernels::active();
        auto& xin = *self.parents[0];
        auto& wt = *self.parents[1];
        const std::size_t op = g.out_plane();
        const std::size_t patch = g.patch();
        const double* gy = self.grad.data();

        if (has_bias && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->grad_buffer();
          for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t o = 0; o < g.o; ++o) {
              const double* row = gy + (n * g.o + o) * op;
              double acc = 0.0;
              for (std::size_t i = 0; i < op; ++i) acc += row[i];
              gb[o] += acc;
            }
          }
        }

        std::vector<double> col(g.pointwise() ? 0 : patch * op);
        if (wt.requires_grad) {
          auto& gw = wt.grad_buffer();
          for (std::size_t n = 0; n < g.n; ++n) {
            const double* x = xin.data.data() + n * g.c * g.in_plane();
            const double* b = x;
            if (!g.pointwise()) {
              im2col(g, x, col.data());
              b = col.data();
            }
            kt.gemm_nt(g.o, patch, op, gy + n * g.o * op, op, b, op, gw.data(), patch);
          }
        }

        if (xin.requires_grad) {
          auto& gx = xin.grad_buffer();
          // W^T, patch x o
          std::vector<double> wt_t(patch * g.o);
          for (std::size_t o = 0; o < g.o; ++o) {
            for (std::size_t p = 0; p < patch; ++p) wt_t[p * g.o + o] = wt.data[o * patch + p];
          }
          for (std::size_t n = 0; n < g.n; ++n) {
            double* dx = gx.data() + n * g.c * g.in_plane();
            if (g.pointwise()) {
              kt.gemm_nn(patch, op, g.o, wt_t.data(), g.o, gy + n * g.o * op, op, dx, op);
            } else {
              std::fill(col.begin(), col.end(), 0.0);
              kt.gemm_nn(patch, op, g.o, wt_t.data(), g.o, gy + n * g.o * op, op, col.data(), op);
              col2im(g, col.data(), dx);
            }
          }
        }
      });
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, std::size_t stride,
                        std::size_t padding) {
  require_rank4(input, "depthwise_conv2d", "input");
  require_rank4(weight, "depthwise_conv2d", "weight");
  if (weight.dim(0) != input.dim(1) || weight.dim(1) != 1) {
    throw std::invalid_argument("depthwise_conv2d: weight must be [" +
                                std::to_string(input.dim(1)) + ", 1, k, k], got " +
                                tensor::to_string(weight.shape()));
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.o = g.c;
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  g.oh = out_extent(g.h, g.kh, stride, padding, "depthwise_conv2d");
  g.ow = out_extent(g.w, g.kw, stride, padding, "depthwise_conv2d");

  // Visits every (output row segment, input row segment, tap) triple. For
  // stride 1 the segments are contiguous and go through the vector kernels.
  auto for_each_tap = [g](auto&& segment) {
    const auto ip = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - ip;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          // valid ox: 0 <= ox*stride + kj - pad < w
          std::size_t ox0 = 0;
          while (ox0 < g.ow && static_cast<std::ptrdiff_t>(ox0 * g.stride + kj) < ip) ++ox0;
          std::size_t ox1 = ox0;
          while (ox1 < g.ow && static_cast<std::ptrdiff_t>(ox1 * g.stride + kj) - ip <
                                   static_cast<std::ptrdiff_t>(g.w)) {
            ++ox1;
          }
          if (ox1 <= ox0) continue;
          const std::size_t ix0 = ox0 * g.stride + kj - g.pad;
          segment(ki * g.kw + kj, oy * g.ow + ox0, static_cast<std::size_t>(iy) * g.w + ix0,
                  ox1 - ox0);
        }
      }
    }
  };

  const auto& kt = kernels::active();
  const std::size_t taps = g.kh * g.kw;
  std::vector<double> out(g.n * g.c * g.out_plane(), 0.0);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.c; ++c) {
      const double* x = input.data().data() + (n * g.c + c) * g.in_plane();
      double* y = out.data() + (n * g.c + c) * g.out_plane();
      const double* w = weight.data().data() + c * taps;
      for_each_tap([&](std::size_t tap, std::size_t yo, std::size_t xo, std::size_t len) {
        if (g.stride == 1) {
          kt.axpy(len, w[tap], x + xo, y + yo);
        } else {
          for (std::size_t i = 0; i < len; ++i) y[yo + i] += w[tap] * x[xo + i * g.stride];
        }
      });
    }
  }

  return Tensor::from_op(
      "depthwise_conv2d", {g.n, g.c, g.oh, g.ow}, std::move(out), {input, weight},
      [g, for_each_tap, taps](tensor::detail::Node& self) {
        const auto& kt = kernels::active();
        auto& xin = *self.parents[0];
        auto& wt = *self.parents[1];
        double* gx = xin.requires_grad ? xin.grad_buffer().data() : nullptr;
        double* gw = wt.requires_grad ? wt.grad_buffer().data() : nullptr;
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t c = 0; c < g.c; ++c) {
            const std::size_t xoff = (n * g.c + c) * g.in_plane();
            const double* x = xin.data.data() + xoff;
            const double* gy = self.grad.data() + (n * g.c + c) * g.out_plane();
            const double* w = wt.data.data() + c * taps;
            for_each_tap([&](std::size_t tap, std::size_t yo, std::size_t xo, std::size_t len) {
              if (g.stride == 1) {
                if (gw) gw[c * taps + tap] += kt.dot(len, gy + yo, x + xo);
                if (gx) kt.axpy(len, w[tap], gy + yo, gx + xoff + xo);
              } else {
                for (std::size_t i = 0; i < len; ++i) {
                  if (gw) gw[c * taps + tap] += gy[yo + i] * x[xo + i * g.stride];
                  if (gx) gx[xoff + xo + i * g.stride] += w[tap] * gy[yo + i];
                }
              }
            });
          }
        }
      });
}

Tensor avg_pool2d(const Tensor& input, std::size_t kernel, std::size_t stride,
                  std::size_t padding) {
  require_rank4(input, "avg_pool2d", "input");
  if (kernel == 0) throw std::invalid_argument("avg_pool2d: kernel must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = out_extent(h, kernel, stride, padding, "avg_pool2d");
  const std::size_t ow = out_extent(w, kernel, stride, padding, "avg_pool2d");
  const double inv = 1.0 / static_cast<double>(kernel * kernel);

  auto visit = [=](std::size_t oy, std::size_t ox, auto&& fn) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                                static_cast<std::ptrdiff_t>(padding);
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                                  static_cast<std::ptrdiff_t>(padding);
        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
        fn(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix));
      }
    }
  };

  std::vector<double> out(n * c * oh * ow);
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* x = input.data().data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        visit(oy, ox, [&](std::size_t i) { acc += x[i]; });
        out[(p * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  return Tensor::from_op("avg_pool2d", {n, c, oh, ow}, std::move(out), {input},
                         [=](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t p = 0; p < n * c; ++p) {
                             double* dx = gx.data() + p * h * w;
                             for (std::size_t oy = 0; oy < oh; ++oy) {
                               for (std::size_t ox = 0; ox < ow; ++ox) {
                                 const double gval = self.grad[(p * oh + oy) * ow + ox] * inv;
                                 visit(oy, ox, [&](std::size_t i) { dx[i] += gval; });
                               }
                             }
                           }
                         });
}

namespace {

// Index map between the shuffled (N, C, H*s, W*s) and unshuffled
// (N, C*s*s, H, W) layouts. Calls fn(unshuffled_index, shuffled_index).
template <typename F>
void shuffle_pairs(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t s,
                   F&& fn) {
  const std::size_t hs = h * s, ws = w * s;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
          const std::size_t src_c = ch * s * s + i * s + j;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
              const std::size_t u = ((b * c * s * s + src_c) * h + y) * w + x;
              const std::size_t v = ((b * c + ch) * hs + y * s + i) * ws + x * s + j;
              fn(u, v);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor pixel_shuffle(const Tensor& input, std::size_t scale) {
  require_rank4(input, "pixel_shuffle", "input");
  if (scale == 0 || input.dim(1) % (scale * scale) != 0) {
    throw std::invalid_argument("pixel_shuffle: channels must be divisible by scale^2");
  }
  const std::size_t n = input.dim(0), c = input.dim(1) / (scale * scale);
  const std::size_t h = input.dim(2), w = input.dim(3);
  std::vector<double> out(input.numel());
  const double* x = input.data().data();
  shuffle_pairs(n, c, h, w, scale, [&](std::size_t u, std::size_t v) { out[v] = x[u]; });
  return Tensor::from_op("pixel_shuffle", {n, c, h * scale, w * scale}, std::move(out), {input},
                         [=](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           shuffle_pairs(n, c, h, w, scale, [&](std::size_t u, std::size_t v) {
                             gx[u] += self.grad[v];
                           });
                         });
}

Tensor pixel_unshuffle(const Tensor& input, std::size_t scale) {
  require_rank4(input, "pixel_unshuffle", "input");
  if (scale == 0 || input.dim(2) % scale != 0 || input.dim(3) % scale != 0) {
    throw std::invalid_argument("pixel_unshuffle: spatial extents must be divisible by scale");
  }
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t h = input.dim(2) / scale, w = input.dim(3) / scale;
  std::vector<double> out(input.numel());
  const double* x = input.data().data();
  shuffle_pairs(n, c, h, w, scale, [&](std::size_t u, std::size_t v) { out[u] = x[v]; });
  return Tensor::from_op("pixel_unshuffle", {n, c * scale * scale, h, w}, std::move(out),
                         {input}, [=](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           shuffle_pairs(n, c, h, w, scale, [&](std::size_t u, std::size_t v) {
                             gx[v] += self.grad[u];
                           });
                         });
}

}  // namespace bitforge::ops
