#pragma once

#include <string>

#include "salite/ops/blas.hpp"
#include "salite/tensor.hpp"

namespace salite {

struct ConvArgs {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// Output extent of a strided, padded, dilated window sweep.
inline int conv_out_extent(int in, int kernel, int stride, int pad, int dilation) {
  return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

namespace detail {

struct ConvGeometry {
  int channels, height, width;
  int kh, kw;
  int out_h, out_w;
  ConvArgs args;

  int col_rows() const { return channels * kh * kw; }
  int col_cols() const { return out_h * out_w; }
  bool is_pointwise() const {
    return kh == 1 && kw == 1 && args.stride == 1 && args.pad == 0;
  }
};

template <Real T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const int cols = g.col_cols();
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        T* dst = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * cols;
        const T* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.args.stride - g.args.pad + ky * g.args.dilation;
          T* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.args.stride - g.args.pad + kx * g.args.dilation;
            row[ox] = (ix >= 0 && ix < g.width) ? plane[iy * g.width + ix] : T(0);
          }
        }
      }
}

template <Real T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const int cols = g.col_cols();
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* src = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * cols;
        T* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.args.stride - g.args.pad + ky * g.args.dilation;
          if (iy < 0 || iy >= g.height) continue;
          const T* row = src + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.args.stride - g.args.pad + kx * g.args.dilation;
            if (ix >= 0 && ix < g.width) plane[iy * g.width + ix] += row[ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation over NCHW input with OIHW weights and per-channel bias.
template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, ConvArgs args = {}) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(1))
    throw DimensionError("conv2d: weight input channels vs input channels", w.dim(1), x.dim(1));
  if (b.numel() != w.dim(0))
    throw DimensionError("conv2d: bias length vs output channels", w.dim(0), b.numel());
  if (args.stride < 1 || args.dilation < 1 || args.pad < 0)
    throw DimensionError("conv2d: stride and dilation must be >= 1, pad >= 0");

  const int n_batch = static_cast<int>(x.dim(0));
  detail::ConvGeometry g{static_cast<int>(x.dim(1)), static_cast<int>(x.dim(2)),
                         static_cast<int>(x.dim(3)), static_cast<int>(w.dim(2)),
                         static_cast<int>(w.dim(3)), 0, 0, args};
  const int span_h = args.dilation * (g.kh - 1) + 1;
  const int span_w = args.dilation * (g.kw - 1) + 1;
  if (g.height + 2 * args.pad < span_h)
    throw DimensionError("conv2d: padded height smaller than kernel span", span_h,
                         g.height + 2 * args.pad);
  if (g.width + 2 * args.pad < span_w)
    throw DimensionError("conv2d: padded width smaller than kernel span", span_w,
                         g.width + 2 * args.pad);
  g.out_h = conv_out_extent(g.height, g.kh, args.stride, args.pad, args.dilation);
  g.out_w = conv_out_extent(g.width, g.kw, args.stride, args.pad, args.dilation);

  const int cout = static_cast<int>(w.dim(0));
  const int k = g.col_rows();
  const int p = g.col_cols();
  const std::size_t in_plane = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const std::size_t out_plane = static_cast<std::size_t>(cout) * p;

  std::vector<T> out(static_cast<std::size_t>(n_batch) * out_plane);
  std::vector<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(k) * p);
  for (int n = 0; n < n_batch; ++n) {
    const T* img = x.data().data() + n * in_plane;
    T* dst = out.data() + n * out_plane;
    for (int o = 0; o < cout; ++o) std::fill(dst + o * p, dst + (o + 1) * p, b.data()[o]);
    const T* src = img;
    if (!g.is_pointwise()) {
      detail::im2col(img, g, col.data());
      src = col.data();
    }
    blas::gemm<T>(false, false, cout, p, k, T(1), w.data().data(), k, src, p, T(1), dst, p);
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return detail::make_result<T>(
      Shape{x.dim(0), w.dim(0), static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w)},
      std::move(out), "conv2d", {&x, &w, &b},
      [xn, wn, bn, g, n_batch, cout, k, p, in_plane, out_plane](const detail::Node<T>& self) {
        T* gx = detail::grad_sink(xn);
        T* gw = detail::grad_sink(wn);
        T* gb = detail::grad_sink(bn);
        std::vector<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(k) * p);
        for (int n = 0; n < n_batch; ++n) {
          const T* gout = self.grad.data() + n * out_plane;
          if (gb)
            for (int o = 0; o < cout; ++o) {
              T acc = 0;
              for (int i = 0; i < p; ++i) acc += gout[o * p + i];
              gb[o] += acc;
            }
          if (gw) {
            const T* src = xn->data.data() + n * in_plane;
            if (!g.is_pointwise()) {
              detail::im2col(src, g, col.data());
              src = col.data();
            }
            blas::gemm<T>(false, true, cout, k, p, T(1), gout, p, src, p, T(1), gw, k);
          }
          if (gx) {
            if (g.is_pointwise()) {
              blas::gemm<T>(true, false, k, p, cout, T(1), wn->data.data(), k, gout, p, T(1),
                            gx + n * in_plane, p);
            } else {
              blas::gemm<T>(true, false, k, p, cout, T(1), wn->data.data(), k, gout, p, T(0),
                            col.data(), p);
              detail::col2im_add(col.data(), g, gx + n * in_plane);
            }
          }
        }
      });
}

/// Affine map y = x W^T + b for x[B,I], W[O,I], b[O].
template <Real T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  if (w.dim(1) != x.dim(1))
    throw DimensionError("linear: weight input width vs input width", w.dim(1), x.dim(1));
  if (b.numel() != w.dim(0)) throw DimensionError("linear: bias length", w.dim(0), b.numel());
  const int rows = static_cast<int>(x.dim(0));
  const int in = static_cast<int>(x.dim(1));
  const int outw = static_cast<int>(w.dim(0));
  std::vector<T> out(static_cast<std::size_t>(rows) * outw);
  for (int r = 0; r < rows; ++r) std::copy(b.data().begin(), b.data().end(), out.begin() + r * outw);
  blas::gemm<T>(false, true, rows, outw, in, T(1), x.data().data(), in, w.data().data(), in, T(1),
                out.data(), outw);
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return detail::make_result<T>(
      Shape{x.dim(0), w.dim(0)}, std::move(out), "linear", {&x, &w, &b},
      [xn, wn, bn, rows, in, outw](const detail::Node<T>& self) {
        const T* gout = self.grad.data();
        if (T* gx = detail::grad_sink(xn))
          blas::gemm<T>(false, false, rows, in, outw, T(1), gout, outw, wn->data.data(), in, T(1),
                        gx, in);
        if (T* gw = detail::grad_sink(wn))
          blas::gemm<T>(true, false, outw, in, rows, T(1), gout, outw, xn->data.data(), in, T(1),
                        gw, in);
        if (T* gb = detail::grad_sink(bn))
          for (int r = 0; r < rows; ++r)
            for (int o = 0; o < outw; ++o) gb[o] += gout[r * outw + o];
      });
}

}  // namespace salite
