#pragma once

#include <cmath>

#include "salite/tensor.hpp"

namespace salite {

namespace detail {

struct LerpTap {
  int lo, hi;
  double frac;  // weight of hi
};

/// Align-corners sample positions: output i maps to i*(in-1)/(out-1).
inline std::vector<LerpTap> align_corner_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double step = out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0;
  for (int i = 0; i < out; ++i) {
    const double src = i * step;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = lo + 1 < in ? lo + 1 : lo;
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace detail

template <Real T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  require_rank(x, 4, "resize_bilinear input");
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: output must be >= 1x1");
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  const std::size_t planes = x.dim(0) * x.dim(1);
  Shape shape{x.dim(0), x.dim(1), static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)};
  auto xn = x.node();
  if (out_h == h && out_w == w) {
    std::vector<T> out(x.data().begin(), x.data().end());
    return detail::make_result<T>(std::move(shape), std::move(out), "resize_bilinear", {&x},
                                  [xn](const detail::Node<T>& self) {
                                    if (T* g = detail::grad_sink(xn))
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        g[i] += self.grad[i];
                                  });
  }
  const auto ty = detail::align_corner_taps(h, out_h);
  const auto tx = detail::align_corner_taps(w, out_w);
  std::vector<T> out(planes * out_h * out_w);
  const T* in = x.data().data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = in + pl * h * w;
    T* dst = out.data() + pl * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ty[oy].frac);
      const T* r0 = src + ty[oy].lo * w;
      const T* r1 = src + ty[oy].hi * w;
      for (int ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(tx[ox].frac);
        const T top = r0[tx[ox].lo] * (T(1) - fx) + r0[tx[ox].hi] * fx;
        const T bot = r1[tx[ox].lo] * (T(1) - fx) + r1[tx[ox].hi] * fx;
        dst[oy * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return detail::make_result<T>(
      std::move(shape), std::move(out), "resize_bilinear", {&x},
      [xn, ty, tx, h, w, out_h, out_w, planes](const detail::Node<T>& self) {
        T* g = detail::grad_sink(xn);
        if (!g) return;
        for (std::size_t pl = 0; pl < planes; ++pl) {
          T* dst = g + pl * h * w;
          const T* gout = self.grad.data() + pl * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const T fy = static_cast<T>(ty[oy].frac);
            T* r0 = dst + ty[oy].lo * w;
            T* r1 = dst + ty[oy].hi * w;
            for (int ox = 0; ox < out_w; ++ox) {
              const T fx = static_cast<T>(tx[ox].frac);
              const T v = gout[oy * out_w + ox];
              r0[tx[ox].lo] += v * (T(1) - fy) * (T(1) - fx);
              r0[tx[ox].hi] += v * (T(1) - fy) * fx;
              r1[tx[ox].lo] += v * fy * (T(1) - fx);
              r1[tx[ox].hi] += v * fy * fx;
            }
          }
        }
      });
}

}  // namespace salite
