#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "salite/ops/elementwise.hpp"
#include "salite/tensor.hpp"

namespace salite {

/// Row-major tiling of an H x W map into patch x patch tiles starting at (0,0);
/// the last row/column of tiles is partial when the extent is not a multiple.
struct PatchGrid {
  struct Tile {
    int row, col, height, width;
  };

  int height = 0, width = 0, patch = 5;
  std::vector<Tile> tiles;

  PatchGrid() = default;
  PatchGrid(int h, int w, int p = 5) : height(h), width(w), patch(p) {
    if (h < 1 || w < 1 || p < 1) throw std::invalid_argument("PatchGrid: extents must be positive");
    for (int r = 0; r < h; r += p)
      for (int c = 0; c < w; c += p) tiles.push_back({r, c, std::min(p, h - r), std::min(p, w - c)});
  }

  /// Tile index of every pixel, row-major.
  std::vector<int> owner() const {
    std::vector<int> own(static_cast<std::size_t>(height) * width, -1);
    for (std::size_t t = 0; t < tiles.size(); ++t)
      for (int r = 0; r < tiles[t].height; ++r)
        for (int c = 0; c < tiles[t].width; ++c)
          own[static_cast<std::size_t>(tiles[t].row + r) * width + tiles[t].col + c] = static_cast<int>(t);
    return own;
  }
};

struct LossWeights {
  double w0 = 0.6;
  double sigma = 5.0;
  double delta = 1.0;
  double lambda1 = 0.6;
  double lambda2 = 0.4;
  int patch = 5;
  /// Boundary term added to the patch BCE as printed (gradient-free) instead of weighting it.
  bool eq5_strict = false;
  double clamp = 1e-7;

  void validate() const {
    if (!(w0 > 0 && sigma > 0 && delta > 0 && lambda1 > 0 && lambda2 > 0 && patch >= 1))
      throw std::invalid_argument("LossWeights: all weights must be positive");
    if (std::abs(lambda1 + lambda2 - 1.0) > 1e-12)
      throw std::invalid_argument("LossWeights: lambda1 + lambda2 must equal 1");
  }
};

namespace detail {

constexpr double kFar = 1e20;

/// Exact squared Euclidean distance transform along one line (lower envelope of parabolas).
inline void edt_1d(const double* f, int n, int stride, double* out, std::vector<int>& v, std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0);
  auto meet = [&](int q, int p) {
    return ((f[q * stride] + double(q) * q) - (f[p * stride] + double(p) * p)) / (2.0 * (q - p));
  };
  int k = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) s = meet(q, v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q * stride] = d * d + f[v[k] * stride];
  }
}

/// Squared distance of every pixel to the nearest site (site cells hold 0, others kFar).
inline std::vector<double> edt_2d(std::vector<double> f, int h, int w) {
  std::vector<double> tmp(f.size());
  std::vector<int> v;
  std::vector<double> z;
  for (int c = 0; c < w; ++c) edt_1d(f.data() + c, h, w, tmp.data() + c, v, z);
  for (int r = 0; r < h; ++r) edt_1d(tmp.data() + r * w, w, 1, f.data() + r * w, v, z);
  return f;
}

/// 8-connected component labels of the foreground; background is -1.
inline std::vector<int> label_components(const std::vector<std::uint8_t>& fg, int h, int w, int& count) {
  std::vector<int> lab(fg.size(), -1);
  std::vector<int> stack;
  count = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!fg[start] || lab[start] >= 0) continue;
    lab[start] = count;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int r = p / w, c = p % w;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const int q = rr * w + cc;
          if (fg[q] && lab[q] < 0) {
            lab[q] = count;
            stack.push_back(q);
          }
        }
    }
    ++count;
  }
  return lab;
}

}  // namespace detail

/// Per-pixel boundary weight w0 * exp(-(d1 + d2)^2 / (2 sigma^2)), d1/d2 the distances to the
/// borders of the nearest and second-nearest foreground components (d2 = d1 with one component).
/// A border pixel is a component pixel with a 4-neighbour in the background. No border: weight 0.
template <Real T>
Tensor<T> boundary_weight_map(const Tensor<T>& mask, const LossWeights& lw = {}) {
  const bool unit_lead = mask.rank() >= 2 && mask.numel() == mask.dim(mask.rank() - 2) * mask.dim(mask.rank() - 1);
  if (mask.rank() > 4 || !unit_lead)
    throw DimensionError("boundary_weight_map: expected [H,W] mask, got " + to_string(mask.shape()));
  const int h = static_cast<int>(mask.dim(mask.rank() - 2)), w = static_cast<int>(mask.dim(mask.rank() - 1));
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = mask[i] >= T(0.5);
  int ncomp = 0;
  const auto lab = detail::label_components(fg, h, w, ncomp);

  std::vector<double> d1(fg.size(), detail::kFar), d2(fg.size(), detail::kFar);
  for (int comp = 0; comp < ncomp; ++comp) {
    std::vector<double> f(fg.size(), detail::kFar);
    bool any = false;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const int p = r * w + c;
        if (lab[p] != comp) continue;
        const bool border = (r > 0 && !fg[p - w]) || (r + 1 < h && !fg[p + w]) || (c > 0 && !fg[p - 1]) ||
                            (c + 1 < w && !fg[p + 1]);
        if (border) f[p] = 0, any = true;
      }
    if (!any) continue;
    const auto sq = detail::edt_2d(std::move(f), h, w);
    for (std::size_t p = 0; p < sq.size(); ++p) {
      const double d = std::sqrt(sq[p]);
      if (d < d1[p]) {
        d2[p] = d1[p];
        d1[p] = d;
      } else if (d < d2[p]) {
        d2[p] = d;
      }
    }
  }
  std::vector<T> out(fg.size(), T(0));
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (d1[p] >= detail::kFar) continue;
    const double second = d2[p] >= detail::kFar ? d1[p] : d2[p];
    const double s = d1[p] + second;
    out[p] = static_cast<T>(lw.w0 * std::exp(-s * s / (2 * lw.sigma * lw.sigma)));
  }
  return Tensor<T>(Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(out));
}

/// Boundary maps for a mask batch [N,1,H,W] -> [N,1,H,W].
template <Real T>
Tensor<T> boundary_weight_batch(const Tensor<T>& masks, const LossWeights& lw = {}) {
  require_rank(masks, 4, "boundary_weight_batch");
  const std::size_t plane = masks.dim(2) * masks.dim(3);
  std::vector<T> out;
  out.reserve(masks.numel());
  for (std::size_t n = 0; n < masks.dim(0); ++n) {
    std::vector<T> one(masks.data().begin() + n * plane, masks.data().begin() + (n + 1) * plane);
    auto w = boundary_weight_map(Tensor<T>(Shape{masks.dim(2), masks.dim(3)}, std::move(one)), lw);
    out.insert(out.end(), w.data().begin(), w.data().end());
  }
  return Tensor<T>(masks.shape(), std::move(out));
}

namespace detail {

/// Scalar sum_x coef(x) * f(s(x), g(x)) + offset with d/ds = coef * f'(s, g); coef and g are constants.
template <Real T, class F, class DF>
Tensor<T> pixel_loss(const Tensor<T>& s, std::vector<double> coef, const Tensor<T>& g, double offset,
                     const char* name, F f, DF df) {
  double acc = offset;
  for (std::size_t i = 0; i < s.numel(); ++i)
    if (coef[i] != 0) acc += coef[i] * f(static_cast<double>(s[i]), static_cast<double>(g[i]));
  auto sn = s.node();
  auto gn = g.node();
  return make_result<T>(Shape{1}, std::vector<T>{static_cast<T>(acc)}, name, {&s},
                        [sn, gn, coef = std::move(coef), df](const Node<T>& self) {
                          T* gs = grad_sink(sn);
                          if (!gs) return;
                          const double up = self.grad[0];
                          for (std::size_t i = 0; i < coef.size(); ++i)
                            if (coef[i] != 0)
                              gs[i] += static_cast<T>(up * coef[i] * df(static_cast<double>(sn->data[i]),
                                                                          static_cast<double>(gn->data[i])));
                        });
}

inline void check_loss_inputs(const Shape& s, const Shape& g, const char* op) {
  if (s.size() != 4 || s[1] != 1) throw DimensionError(std::string(op) + ": expected [N,1,H,W] saliency, got " + to_string(s));
  if (s != g) throw DimensionError(std::string(op) + ": saliency/mask shape mismatch " + to_string(s) + " vs " + to_string(g));
}

}  // namespace detail

/// Patch-wise class-balanced BCE. Within a patch positives carry N-/N and negatives N+/N;
/// each pixel is additionally scaled by (1 + w(x)) (or, in strict mode, w(x) is added as a
/// constant patch term). Mean within each patch, over patches, then over the batch.
template <Real T>
Tensor<T> balanced_bce_patch(const Tensor<T>& s, const Tensor<T>& g, const Tensor<T>& boundary, const PatchGrid& grid,
                             const LossWeights& lw = {}) {
  detail::check_loss_inputs(s.shape(), g.shape(), "balanced_bce_patch");
  if (boundary.numel() != g.numel()) throw DimensionError("balanced_bce_patch: boundary map size", g.numel(), boundary.numel());
  const std::size_t n = s.dim(0), h = s.dim(2), w = s.dim(3), plane = h * w;
  if (static_cast<std::size_t>(grid.height) != h || static_cast<std::size_t>(grid.width) != w)
    throw DimensionError("balanced_bce_patch: patch grid extent vs map", h, static_cast<std::size_t>(grid.height));
  std::vector<double> coef(s.numel(), 0.0);
  double offset = 0;
  const double per_patch = 1.0 / (static_cast<double>(grid.tiles.size()) * n);
  for (std::size_t b = 0; b < n; ++b)
    for (const auto& t : grid.tiles) {
      double pos = 0;
      const double cnt = static_cast<double>(t.height) * t.width;
      for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) pos += g[b * plane + (t.row + r) * w + t.col + c] >= T(0.5);
      const double wpos = (cnt - pos) / cnt, wneg = pos / cnt;
      for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) {
          const std::size_t i = b * plane + (t.row + r) * w + t.col + c;
          const double bw = static_cast<double>(boundary[i]);
          const double bal = g[i] >= T(0.5) ? wpos : wneg;
          coef[i] = bal * (lw.eq5_strict ? 1.0 : 1.0 + bw) * per_patch / cnt;
          if (lw.eq5_strict) offset += bw * per_patch / cnt;
        }
    }
  const double lo = lw.clamp, hi = 1.0 - lw.clamp;
  return detail::pixel_loss<T>(
      s, std::move(coef), g, offset, "balanced_bce_patch",
      [lo, hi](double sv, double gv) {
        const double c = std::clamp(sv, lo, hi);
        return -(gv * std::log(c) + (1 - gv) * std::log(1 - c));
      },
      [lo, hi](double sv, double gv) {
        if (sv < lo || sv > hi) return 0.0;
        return -gv / sv + (1 - gv) / (1 - sv);
      });
}

inline double huber(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * a - 0.5 * delta * delta;
}

/// Patch-wise Huber loss on e = g - s: mean within patch, over patches, over the batch.
template <Real T>
Tensor<T> huber_patch(const Tensor<T>& s, const Tensor<T>& g, const PatchGrid& grid, double delta = 1.0) {
  detail::check_loss_inputs(s.shape(), g.shape(), "huber_patch");
  const std::size_t n = s.dim(0), w = s.dim(3), plane = s.dim(2) * w;
  if (static_cast<std::size_t>(grid.height) != s.dim(2) || static_cast<std::size_t>(grid.width) != w)
    throw DimensionError("huber_patch: patch grid extent vs map", s.dim(2), static_cast<std::size_t>(grid.height));
  std::vector<double> coef(s.numel(), 0.0);
  const double per_patch = 1.0 / (static_cast<double>(grid.tiles.size()) * n);
  for (std::size_t b = 0; b < n; ++b)
    for (const auto& t : grid.tiles) {
      const double cnt = static_cast<double>(t.height) * t.width;
      for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) coef[b * plane + (t.row + r) * w + t.col + c] = per_patch / cnt;
    }
  return detail::pixel_loss<T>(
      s, std::move(coef), g, 0.0, "huber_patch", [delta](double sv, double gv) { return huber(gv - sv, delta); },
      [delta](double sv, double gv) {
        const double e = gv - sv;
        return std::abs(e) <= delta ? -e : (e > 0 ? -delta : delta);
      });
}

template <Real T>
struct LossTerms {
  Tensor<T> total, bce, huber;
};

/// lambda1 * balanced BCE + lambda2 * Huber. `boundary` may be left undefined to compute it from g.
template <Real T>
LossTerms<T> total_loss(const Tensor<T>& s, const Tensor<T>& g, const LossWeights& lw = {},
                        Tensor<T> boundary = Tensor<T>()) {
  lw.validate();
  detail::check_loss_inputs(s.shape(), g.shape(), "total_loss");
  if (!boundary.defined()) boundary = boundary_weight_batch(g, lw);
  const PatchGrid grid(static_cast<int>(s.dim(2)), static_cast<int>(s.dim(3)), lw.patch);
  LossTerms<T> out;
  out.bce = balanced_bce_patch(s, g, boundary, grid, lw);
  out.huber = huber_patch(s, g, grid, lw.delta);
  out.total = add(scale(out.bce, static_cast<T>(lw.lambda1)), scale(out.huber, static_cast<T>(lw.lambda2)));
  return out;
}

}  // namespace salite
