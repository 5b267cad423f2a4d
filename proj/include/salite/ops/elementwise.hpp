#pragma once

#include <cmath>

#include "salite/tensor.hpp"

namespace salite {

namespace detail {

template <Real T, typename Fwd, typename Deriv>
Tensor<T> unary_map(const Tensor<T>& x, const char* op, Fwd fwd, Deriv deriv_from_xy) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), op, {&x},
                        [xn, deriv_from_xy](const Node<T>& self) {
                          T* gx = grad_sink(xn);
                          if (!gx) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            gx[i] += self.grad[i] * deriv_from_xy(xn->data[i], self.data[i]);
                        });
}

}  // namespace detail

/// Subgradient at exactly 0 is 0.
template <Real T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_map(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <Real T>
T sigmoid_scalar(T v) {
  // split on sign so exp never overflows
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <Real T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_map(
      x, "sigmoid", [](T v) { return sigmoid_scalar(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <Real T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary_map(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <Real T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary_map(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

namespace detail {

template <Real T>
Tensor<T> binary_linear(const Tensor<T>& a, const Tensor<T>& b, T sign_b, const char* op) {
  require_same_shape(a, b, op);
  const auto da = a.data();
  const auto db = b.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] + sign_b * db[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(a.shape(), std::move(out), op, {&a, &b},
                        [an, bn, sign_b](const Node<T>& self) {
                          // a and b may alias (y = x + x): accumulate one at a time
                          if (T* ga = grad_sink(an))
                            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
                          if (T* gb = grad_sink(bn))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              gb[i] += sign_b * self.grad[i];
                        });
}

}  // namespace detail

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_linear(a, b, T(1), "add");
}

template <Real T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_linear(a, b, T(-1), "sub");
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto da = a.data();
  const auto db = b.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] * db[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), "mul", {&a, &b},
                                [an, bn](const detail::Node<T>& self) {
                                  if (T* ga = detail::grad_sink(an))
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      ga[i] += self.grad[i] * bn->data[i];
                                  if (T* gb = detail::grad_sink(bn))
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      gb[i] += self.grad[i] * an->data[i];
                                });
}

/// Sum of several same-shape tensors in argument order.
template <Real T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw DimensionError("add_n: empty input list");
  std::vector<T> out(xs[0].data().begin(), xs[0].data().end());
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_shape(xs[0], xs[k], "add_n");
    const auto d = xs[k].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
  }
  std::vector<typename Tensor<T>::NodePtr> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  return detail::make_result<T>(xs[0].shape(), std::move(out), "add_n", xs,
                                [nodes](const detail::Node<T>& self) {
                                  for (const auto& n : nodes)
                                    if (T* g = detail::grad_sink(n))
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        g[i] += self.grad[i];
                                });
}

template <Real T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto xn = x.node();
  return detail::make_result<T>(Shape{1}, {acc}, "sum", {&x}, [xn](const detail::Node<T>& self) {
    if (T* g = detail::grad_sink(xn))
      for (std::size_t i = 0; i < xn->data.size(); ++i) g[i] += self.grad[0];
  });
}

template <Real T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Weighted scalar combination sum_k w_k * x_k of scalar tensors.
template <Real T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& xs, const std::vector<T>& weights) {
  if (xs.size() != weights.size())
    throw DimensionError("weighted_sum: weight count", xs.size(), weights.size());
  std::vector<Tensor<T>> terms;
  for (std::size_t k = 0; k < xs.size(); ++k) terms.push_back(scale(xs[k], weights[k]));
  return add_n(terms);
}

}  // namespace salite
