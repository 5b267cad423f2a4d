#pragma once

#include <limits>

#include "salite/ops/conv.hpp"
#include "salite/tensor.hpp"

namespace salite {

enum class PoolKind { max, avg };

/// Unpadded k x k pooling. Max routes the gradient to the first maximum in
/// row-major window order.
template <Real T>
Tensor<T> pool2d(const Tensor<T>& x, PoolKind kind, int k, int stride) {
  require_rank(x, 4, "pool2d input");
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  if (k < 1 || stride < 1) throw DimensionError("pool2d: kernel and stride must be >= 1");
  if (k > h) throw DimensionError("pool2d: kernel exceeds height", static_cast<std::size_t>(h), k);
  if (k > w) throw DimensionError("pool2d: kernel exceeds width", static_cast<std::size_t>(w), k);
  const int oh = conv_out_extent(h, k, stride, 0, 1);
  const int ow = conv_out_extent(w, k, stride, 0, 1);
  const std::size_t planes = x.dim(0) * x.dim(1);
  std::vector<T> out(planes * oh * ow);
  std::vector<std::uint32_t> argmax(kind == PoolKind::max ? out.size() : 0);
  const T* in = x.data().data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = in + pl * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const std::size_t o = (pl * oh + oy) * ow + ox;
        if (kind == PoolKind::max) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t where = static_cast<std::uint32_t>((oy * stride) * w + ox * stride);
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int idx = (oy * stride + ky) * w + ox * stride + kx;
              if (src[idx] > best) {
                best = src[idx];
                where = static_cast<std::uint32_t>(idx);
              }
            }
          out[o] = best;
          argmax[o] = where;
        } else {
          T acc = 0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) acc += src[(oy * stride + ky) * w + ox * stride + kx];
          out[o] = acc / static_cast<T>(k * k);
        }
      }
  }
  auto xn = x.node();
  return detail::make_result<T>(
      Shape{x.dim(0), x.dim(1), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)},
      std::move(out), kind == PoolKind::max ? "max_pool2d" : "avg_pool2d", {&x},
      [xn, kind, k, stride, h, w, oh, ow, planes, argmax = std::move(argmax)](const detail::Node<T>& self) {
        T* g = detail::grad_sink(xn);
        if (!g) return;
        const T inv = T(1) / static_cast<T>(k * k);
        for (std::size_t pl = 0; pl < planes; ++pl) {
          T* dst = g + pl * h * w;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const std::size_t o = (pl * oh + oy) * ow + ox;
              if (kind == PoolKind::max) {
                dst[argmax[o]] += self.grad[o];
              } else {
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx)
                    dst[(oy * stride + ky) * w + ox * stride + kx] += self.grad[o] * inv;
              }
            }
        }
      });
}

/// Area pooling onto an arbitrary out_h x out_w grid. Bin i along an axis of
/// extent n covers [floor(i*n/out), ceil((i+1)*n/out)), so bins overlap when
/// upsampling and a 1x1 grid is the global mean.
template <Real T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, int out_h, int out_w) {
  require_rank(x, 4, "adaptive_avg_pool2d input");
  if (out_h < 1 || out_w < 1) throw DimensionError("adaptive_avg_pool2d: output must be >= 1x1");
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  auto bins = [](int n, int out) {
    std::vector<std::pair<int, int>> b(out);
    for (int i = 0; i < out; ++i)
      b[i] = {(i * n) / out, ((i + 1) * n + out - 1) / out};
    return b;
  };
  const auto by = bins(h, out_h);
  const auto bx = bins(w, out_w);
  const std::size_t planes = x.dim(0) * x.dim(1);
  std::vector<T> out(planes * out_h * out_w);
  const T* in = x.data().data();
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        T acc = 0;
        for (int iy = by[oy].first; iy < by[oy].second; ++iy)
          for (int ix = bx[ox].first; ix < bx[ox].second; ++ix) acc += in[(pl * h + iy) * w + ix];
        const int area = (by[oy].second - by[oy].first) * (bx[ox].second - bx[ox].first);
        out[(pl * out_h + oy) * out_w + ox] = acc / static_cast<T>(area);
      }
  auto xn = x.node();
  return detail::make_result<T>(
      Shape{x.dim(0), x.dim(1), static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)},
      std::move(out), "adaptive_avg_pool2d", {&x},
      [xn, by, bx, h, w, out_h, out_w, planes](const detail::Node<T>& self) {
        T* g = detail::grad_sink(xn);
        if (!g) return;
        for (std::size_t pl = 0; pl < planes; ++pl)
          for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
              const int area = (by[oy].second - by[oy].first) * (bx[ox].second - bx[ox].first);
              const T share = self.grad[(pl * out_h + oy) * out_w + ox] / static_cast<T>(area);
              for (int iy = by[oy].first; iy < by[oy].second; ++iy)
                for (int ix = bx[ox].first; ix < bx[ox].second; ++ix) g[(pl * h + iy) * w + ix] += share;
            }
      });
}

}  // namespace salite
