#pragma once

#include <string>

#include "salite/tensor.hpp"

namespace salite {

namespace detail {

inline std::size_t outer_extent(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}

inline std::size_t inner_extent(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace detail

template <Real T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("reshape " + to_string(x.shape()) + " -> " + to_string(shape),
                         x.numel(), numel(shape));
  auto xn = x.node();
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {&x},
                                [xn](const detail::Node<T>& self) {
                                  if (T* g = detail::grad_sink(xn))
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[i] += self.grad[i];
                                });
}

/// Concatenation along `axis`; all other extents must agree.
template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: empty input list");
  Shape shape = xs[0].shape();
  if (axis >= shape.size()) throw DimensionError("concat: axis out of range", shape.size(), axis);
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.rank() != shape.size()) throw DimensionError("concat: rank", shape.size(), x.rank());
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (i != axis && x.dim(i) != shape[i])
        throw DimensionError("concat: extent of axis " + std::to_string(i), shape[i], x.dim(i));
    total += x.dim(axis);
  }
  shape[axis] = total;
  const std::size_t outer = detail::outer_extent(shape, axis);
  const std::size_t inner = detail::inner_extent(shape, axis);
  std::vector<T> out(numel(shape));
  std::vector<std::size_t> widths;
  for (const auto& x : xs) widths.push_back(x.dim(axis) * inner);
  const std::size_t row = total * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * row;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const T* src = xs[k].data().data() + o * widths[k];
      std::copy(src, src + widths[k], out.begin() + offset);
      offset += widths[k];
    }
  }
  std::vector<typename Tensor<T>::NodePtr> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  return detail::make_result<T>(
      std::move(shape), std::move(out), "concat", xs,
      [nodes, widths, outer, row](const detail::Node<T>& self) {
        for (std::size_t o = 0; o < outer; ++o) {
          std::size_t offset = o * row;
          for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (T* g = detail::grad_sink(nodes[k])) {
              T* dst = g + o * widths[k];
              const T* src = self.grad.data() + offset;
              for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
            }
            offset += widths[k];
          }
        }
      });
}

/// Contiguous sub-range [start, start+length) along `axis`.
template <Real T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank()) throw DimensionError("slice: axis out of range", x.rank(), axis);
  if (start + length > x.dim(axis))
    throw DimensionError("slice: range exceeds extent", x.dim(axis), start + length);
  Shape shape = x.shape();
  const std::size_t outer = detail::outer_extent(shape, axis);
  const std::size_t inner = detail::inner_extent(shape, axis);
  const std::size_t src_row = shape[axis] * inner;
  shape[axis] = length;
  const std::size_t dst_row = length * inner;
  std::vector<T> out(outer * dst_row);
  const T* src = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(src + o * src_row + start * inner, src + o * src_row + start * inner + dst_row,
              out.begin() + o * dst_row);
  auto xn = x.node();
  return detail::make_result<T>(std::move(shape), std::move(out), "slice", {&x},
                                [xn, outer, src_row, dst_row, start, inner](const detail::Node<T>& self) {
                                  T* g = detail::grad_sink(xn);
                                  if (!g) return;
                                  for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t i = 0; i < dst_row; ++i)
                                      g[o * src_row + start * inner + i] += self.grad[o * dst_row + i];
                                });
}

/// Removes `axis` by picking one index along it.
template <Real T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index) {
  Shape shape = x.shape();
  auto s = slice(x, axis, index, 1);
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return reshape(s, shape);
}

/// Stacks same-shape tensors along a new leading-or-inner axis.
template <Real T>
Tensor<T> stack(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("stack: empty input list");
  std::vector<Tensor<T>> expanded;
  expanded.reserve(xs.size());
  for (const auto& x : xs) {
    require_same_shape(xs[0], x, "stack");
    Shape s = x.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(x, s));
  }
  return concat(expanded, axis);
}

/// Axis permutation: output axis i is input axis perm[i].
template <Real T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw DimensionError("permute: permutation length", r, perm.size());
  Shape out_shape(r);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dim(i);
  std::vector<std::size_t> src_stride(r);
  std::vector<bool> seen(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || seen[perm[i]]) throw DimensionError("permute: invalid permutation");
    seen[perm[i]] = true;
    out_shape[i] = x.dim(perm[i]);
    src_stride[i] = in_strides[perm[i]];
  }
  const std::size_t n = x.numel();
  // out element j -> source offset
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t j = 0; j < n; ++j) {
    gather[j] = src;
    for (std::size_t a = r; a-- > 0;) {
      ++idx[a];
      src += src_stride[a];
      if (idx[a] < out_shape[a]) break;
      src -= src_stride[a] * out_shape[a];
      idx[a] = 0;
    }
  }
  std::vector<T> out(n);
  const T* in = x.data().data();
  for (std::size_t j = 0; j < n; ++j) out[j] = in[gather[j]];
  auto xn = x.node();
  return detail::make_result<T>(std::move(out_shape), std::move(out), "permute", {&x},
                                [xn, gather = std::move(gather)](const detail::Node<T>& self) {
                                  T* g = detail::grad_sink(xn);
                                  if (!g) return;
                                  for (std::size_t j = 0; j < gather.size(); ++j)
                                    g[gather[j]] += self.grad[j];
                                });
}

}  // namespace salite
