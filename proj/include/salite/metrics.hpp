#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "salite/tensor.hpp"

namespace salite {

inline constexpr int kLevels = 256;

/// Saliency value -> 0..255 level, round half up.
inline int quantize_level(double s) {
  const double q = std::floor(255.0 * s + 0.5);
  return static_cast<int>(std::clamp(q, 0.0, 255.0));
}

/// Precision/recall at thresholds t = 0..255; a pixel is predicted positive when its level >= t.
struct PRCurve {
  std::array<double, kLevels> precision{};
  std::array<double, kLevels> recall{};
};

inline double f_measure(double p, double r, double beta2 = 0.3) {
  const double den = beta2 * p + r;
  return den > 0.0 ? (1.0 + beta2) * p * r / den : 0.0;
}

namespace detail {

template <typename A, typename B>
void require_same_size(const A& s, const B& g, const char* what) {
  if (s.size() != g.size()) throw DimensionError(std::string(what) + ": map and mask sizes differ", g.size(), s.size());
}

}  // namespace detail

/// Histogram sweep: per-level positive/negative counts, then suffix sums give TP and FP at every threshold.
template <typename S, typename G>
PRCurve pr_curve(std::span<const S> s, std::span<const G> g) {
  detail::require_same_size(s, g, "pr_curve");
  std::array<std::size_t, kLevels> pos{}, neg{};
  for (std::size_t i = 0; i < s.size(); ++i) ++(g[i] > G(0.5) ? pos : neg)[quantize_level(s[i])];
  std::size_t total_pos = 0;
  for (auto c : pos) total_pos += c;
  PRCurve c;
  std::size_t tp = 0, fp = 0;
  for (int t = kLevels - 1; t >= 0; --t) {
    tp += pos[t];
    fp += neg[t];
    c.precision[t] = tp + fp ? double(tp) / double(tp + fp) : 1.0;
    c.recall[t] = total_pos ? double(tp) / double(total_pos) : 0.0;
  }
  return c;
}

template <Real T>
PRCurve pr_curve(const Tensor<T>& s, const Tensor<T>& g) {
  if (s.shape() != g.shape()) throw DimensionError("pr_curve: shape " + to_string(s.shape()) + " vs " + to_string(g.shape()));
  return pr_curve<T, T>(s.data(), g.data());
}

inline double max_f(const PRCurve& c, double beta2 = 0.3) {
  double best = 0.0;
  for (int t = 0; t < kLevels; ++t) best = std::max(best, f_measure(c.precision[t], c.recall[t], beta2));
  return best;
}

template <typename S, typename G>
double mae(std::span<const S> s, std::span<const G> g) {
  detail::require_same_size(s, g, "mae");
  if (s.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(double(s[i]) - double(g[i]));
  return acc / double(s.size());
}

template <Real T>
double mae(const Tensor<T>& s, const Tensor<T>& g) {
  if (s.shape() != g.shape()) throw DimensionError("mae: shape " + to_string(s.shape()) + " vs " + to_string(g.shape()));
  return mae<T, T>(s.data(), g.data());
}

/// F at the binarization threshold min(2 mean(S), 1), applied to the unquantized values.
template <typename S, typename G>
double adaptive_f(std::span<const S> s, std::span<const G> g, double beta2 = 0.3) {
  detail::require_same_size(s, g, "adaptive_f");
  double mean = 0.0;
  for (auto v : s) mean += double(v);
  mean = s.empty() ? 0.0 : mean / double(s.size());
  const double thr = std::min(2.0 * mean, 1.0);
  std::size_t tp = 0, fp = 0, pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool y = g[i] > G(0.5), yhat = double(s[i]) >= thr;
    pos += y;
    tp += y && yhat;
    fp += !y && yhat;
  }
  const double p = tp + fp ? double(tp) / double(tp + fp) : 1.0;
  const double r = pos ? double(tp) / double(pos) : 0.0;
  return f_measure(p, r, beta2);
}

struct ImageScore {
  std::string name;
  double max_f = 0.0;
  double adaptive_f = 0.0;
  double mae = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::vector<ImageScore> images;
  double mean_max_f = 0.0;
  double mean_adaptive_f = 0.0;
  double mean_mae = 0.0;

  std::size_t count() const { return images.size(); }
};

template <typename S, typename G>
ImageScore score_image(std::string name, std::span<const S> s, std::span<const G> g, double beta2 = 0.3) {
  return {std::move(name), max_f(pr_curve(s, g), beta2), adaptive_f(s, g, beta2), mae(s, g)};
}

inline void finalize(EvalReport& r) {
  r.mean_max_f = r.mean_adaptive_f = r.mean_mae = 0.0;
  if (r.images.empty()) return;
  for (const auto& i : r.images) {
    r.mean_max_f += i.max_f;
    r.mean_adaptive_f += i.adaptive_f;
    r.mean_mae += i.mae;
  }
  const double n = double(r.images.size());
  r.mean_max_f /= n;
  r.mean_adaptive_f /= n;
  r.mean_mae /= n;
}

/// Per-image records (name, maxF, adaptF, mae), then a summary table keyed by dataset.
inline void write_report(std::ostream& os, const EvalReport& r) {
  const auto old = os.precision(6);
  os << std::fixed << "# name\tmaxF\tadaptF\tmae\n";
  for (const auto& i : r.images) os << i.name << '\t' << i.max_f << '\t' << i.adaptive_f << '\t' << i.mae << '\n';
  os << "\n# dataset\timages\tF-Score\tadaptive-F\tMAE\n";
  os << (r.dataset.empty() ? "-" : r.dataset) << '\t' << r.count() << '\t' << r.mean_max_f << '\t'
     << r.mean_adaptive_f << '\t' << r.mean_mae << '\n';
  os.unsetf(std::ios_base::floatfield);
  os.precision(old);
}

}  // namespace salite
