#pragma once

#include "salite/ops/blas.hpp"
#include "salite/tensor.hpp"

namespace salite {

/// Weighted sum over a grid of attendee vectors.
/// weights[N,D,H,W] with D = hv*wv, values[N,C,hv,wv] -> out[N,C,H,W] where
/// out[n,:,y,x] = sum_i weights[n,i,y,x] * values[n,:,i].
template <Real T>
Tensor<T> attend_global(const Tensor<T>& weights, const Tensor<T>& values) {
  require_rank(weights, 4, "attend_global weights");
  require_rank(values, 4, "attend_global values");
  if (weights.dim(0) != values.dim(0))
    throw DimensionError("attend_global: batch", weights.dim(0), values.dim(0));
  const int d = static_cast<int>(weights.dim(1));
  if (static_cast<std::size_t>(d) != values.dim(2) * values.dim(3))
    throw DimensionError("attend_global: attention depth vs attendee count",
                         values.dim(2) * values.dim(3), d);
  const int c = static_cast<int>(values.dim(1));
  const int p = static_cast<int>(weights.dim(2) * weights.dim(3));
  const std::size_t n_batch = weights.dim(0);
  std::vector<T> out(n_batch * c * p);
  for (std::size_t n = 0; n < n_batch; ++n)
    blas::gemm<T>(false, false, c, p, d, T(1), values.data().data() + n * c * d, d,
                  weights.data().data() + n * d * p, p, T(0), out.data() + n * c * p, p);
  auto wn = weights.node();
  auto vn = values.node();
  return detail::make_result<T>(
      Shape{n_batch, values.dim(1), weights.dim(2), weights.dim(3)}, std::move(out),
      "attend_global", {&weights, &values}, [wn, vn, n_batch, c, d, p](const detail::Node<T>& self) {
        T* gw = detail::grad_sink(wn);
        T* gv = detail::grad_sink(vn);
        for (std::size_t n = 0; n < n_batch; ++n) {
          const T* gout = self.grad.data() + n * c * p;
          if (gv)
            blas::gemm<T>(false, true, c, d, p, T(1), gout, p, wn->data.data() + n * d * p, p, T(1),
                          gv + n * c * d, d);
          if (gw)
            blas::gemm<T>(true, false, d, p, c, T(1), vn->data.data() + n * c * d, d, gout, p, T(1),
                          gw + n * d * p, p);
        }
      });
}

/// Per-pixel weighted sum over a dilated k x k neighbourhood, zero outside the map.
/// weights[N,k*k,H,W] (row-major tap order), features[N,C,H,W] -> [N,C,H,W].
template <Real T>
Tensor<T> attend_local(const Tensor<T>& weights, const Tensor<T>& features, int kernel, int dilation) {
  require_rank(weights, 4, "attend_local weights");
  require_rank(features, 4, "attend_local features");
  const std::size_t taps = static_cast<std::size_t>(kernel) * kernel;
  if (weights.dim(1) != taps)
    throw DimensionError("attend_local: weight depth vs kernel area", taps, weights.dim(1));
  if (weights.dim(0) != features.dim(0) || weights.dim(2) != features.dim(2) ||
      weights.dim(3) != features.dim(3))
    throw DimensionError("attend_local: weights " + to_string(weights.shape()) + " vs features " +
                         to_string(features.shape()));
  const int n_batch = static_cast<int>(features.dim(0));
  const int c = static_cast<int>(features.dim(1));
  const int h = static_cast<int>(features.dim(2));
  const int w = static_cast<int>(features.dim(3));
  const int half = kernel / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<T> out(features.numel(), T(0));
  const T* a = weights.data().data();
  const T* f = features.data().data();
  for (int n = 0; n < n_batch; ++n)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const int dy = (ky - half) * dilation;
        const int dx = (kx - half) * dilation;
        const T* an = a + (static_cast<std::size_t>(n) * taps + ky * kernel + kx) * hw;
        for (int ch = 0; ch < c; ++ch) {
          const T* fp = f + (static_cast<std::size_t>(n) * c + ch) * hw;
          T* op = out.data() + (static_cast<std::size_t>(n) * c + ch) * hw;
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y)
            for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x)
              op[y * w + x] += an[y * w + x] * fp[(y + dy) * w + x + dx];
        }
      }
  auto wn = weights.node();
  auto fn = features.node();
  return detail::make_result<T>(
      features.shape(), std::move(out), "attend_local", {&weights, &features},
      [wn, fn, n_batch, c, h, w, hw, kernel, dilation, half, taps](const detail::Node<T>& self) {
        T* ga = detail::grad_sink(wn);
        T* gf = detail::grad_sink(fn);
        const T* a = wn->data.data();
        const T* f = fn->data.data();
        for (int n = 0; n < n_batch; ++n)
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
              const int dy = (ky - half) * dilation;
              const int dx = (kx - half) * dilation;
              const std::size_t aoff = (static_cast<std::size_t>(n) * taps + ky * kernel + kx) * hw;
              for (int ch = 0; ch < c; ++ch) {
                const std::size_t foff = (static_cast<std::size_t>(n) * c + ch) * hw;
                const T* go = self.grad.data() + foff;
                for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y)
                  for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x) {
                    const int src = (y + dy) * w + x + dx;
                    if (ga) ga[aoff + y * w + x] += go[y * w + x] * f[foff + src];
                    if (gf) gf[foff + src] += go[y * w + x] * a[aoff + y * w + x];
                  }
              }
            }
      });
}

}  // namespace salite
