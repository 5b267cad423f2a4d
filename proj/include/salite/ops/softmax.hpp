#pragma once

#include <cmath>
#include <string>

#include "salite/tensor.hpp"

namespace salite {

/// Softmax across axis 1 of an [N,D,H,W] tensor, independently at every pixel.
/// Logits are shifted by their per-pixel maximum before exponentiation.
template <Real T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  require_rank(x, 4, "softmax_channels input");
  const std::size_t n = x.dim(0), d = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (d < 1) throw DimensionError("softmax_channels: need at least one channel");
  const T* in = x.data().data();
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (!std::isfinite(in[i]))
      throw NumericError("softmax_channels: non-finite logit at flat index " + std::to_string(i), i);
  std::vector<T> out(x.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = b * d * hw + p;
      T top = in[base];
      for (std::size_t c = 1; c < d; ++c) top = std::max(top, in[base + c * hw]);
      T z = 0;
      for (std::size_t c = 0; c < d; ++c) {
        const T e = std::exp(in[base + c * hw] - top);
        out[base + c * hw] = e;
        z += e;
      }
      const T inv = T(1) / z;
      for (std::size_t c = 0; c < d; ++c) out[base + c * hw] *= inv;
    }
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), "softmax_channels", {&x},
                                [xn, n, d, hw](const detail::Node<T>& self) {
                                  T* g = detail::grad_sink(xn);
                                  if (!g) return;
                                  const T* y = self.data.data();
                                  const T* gy = self.grad.data();
                                  for (std::size_t b = 0; b < n; ++b)
                                    for (std::size_t p = 0; p < hw; ++p) {
                                      const std::size_t base = b * d * hw + p;
                                      T dot = 0;
                                      for (std::size_t c = 0; c < d; ++c)
                                        dot += y[base + c * hw] * gy[base + c * hw];
                                      for (std::size_t c = 0; c < d; ++c) {
                                        const std::size_t i = base + c * hw;
                                        g[i] += y[i] * (gy[i] - dot);
                                      }
                                    }
                                });
}

}  // namespace salite
