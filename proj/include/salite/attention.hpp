#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "salite/ops.hpp"
#include "salite/params.hpp"

namespace salite {

enum class ScaleCombine { sum, concat };

struct GlobalAttentionConfig {
  std::vector<int> scales{5, 7, 10};
  int renet_hidden = 256;  // per sweep direction
  ScaleCombine combine = ScaleCombine::sum;

  int depth(int m) const { return m * m; }

  std::size_t scale_index(int m) const {
    auto it = std::find(scales.begin(), scales.end(), m);
    if (it == scales.end())
      throw std::invalid_argument("global attention: scale " + std::to_string(m) + " not configured");
    return static_cast<std::size_t>(it - scales.begin());
  }

  void validate() const {
    if (scales.empty()) throw std::invalid_argument("global attention: no scales");
    if (!std::is_sorted(scales.begin(), scales.end()) ||
        std::adjacent_find(scales.begin(), scales.end()) != scales.end())
      throw std::invalid_argument("global attention: scales must be strictly ascending");
    if (scales.front() < 1 || renet_hidden < 1)
      throw std::invalid_argument("global attention: scales and hidden size must be positive");
  }
};

struct LocalAttentionConfig {
  int kernel = 7;
  int dilation = 2;

  int taps() const { return kernel * kernel; }

  void validate() const {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("local attention: kernel must be odd");
    if (dilation < 1) throw std::invalid_argument("local attention: dilation must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// ReNet: a bidirectional LSTM along every row, then along every column of the
// row result. Output has 2*hidden channels and the input grid size.

template <Real T>
struct RenetWeights {
  LstmWeights<T> row_fwd, row_bwd, col_fwd, col_bwd;

  static RenetWeights create(ParamStore<T>& store, const std::string& prefix, int in_ch, int hidden,
                             ParamGroup group) {
    auto lstm = [&](const std::string& name, int in) {
      const std::size_t h = static_cast<std::size_t>(hidden);
      const std::string p = prefix + "." + name;
      return LstmWeights<T>{
          store.add(p + ".input_weight", prefix, Shape{4 * h, static_cast<std::size_t>(in)}, group,
                    Init::lstm_uniform, hidden),
          store.add(p + ".hidden_weight", prefix, Shape{4 * h, h}, group, Init::lstm_uniform, hidden),
          store.add(p + ".bias", prefix, Shape{4 * h}, group, Init::lstm_uniform, hidden)};
    };
    RenetWeights r;
    r.row_fwd = lstm("row_fwd", in_ch);
    r.row_bwd = lstm("row_bwd", in_ch);
    r.col_fwd = lstm("col_fwd", 2 * hidden);
    r.col_bwd = lstm("col_bwd", 2 * hidden);
    return r;
  }
};

namespace detail {

/// Runs both directions over seq[T,B,I]; returns [T,B,2H] with forward states first.
template <Real T>
Tensor<T> bidirectional_sweep(const Tensor<T>& seq, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd) {
  const std::size_t steps = seq.dim(0), batch = seq.dim(1), hid = fwd.hidden_size();
  std::vector<Tensor<T>> xs;
  xs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(select(seq, 0, t));
  auto run = [&](const LstmWeights<T>& w, bool reverse) {
    LstmState<T> s{Tensor<T>(Shape{batch, hid}), Tensor<T>(Shape{batch, hid})};
    std::vector<Tensor<T>> hs(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = reverse ? steps - 1 - k : k;
      s = lstm_cell(xs[t], s, w);
      hs[t] = s.h;
    }
    return stack(hs, 0);
  };
  return concat<T>({run(fwd, false), run(bwd, true)}, 2);
}

}  // namespace detail

template <Real T>
Tensor<T> renet_forward(const Tensor<T>& f, const RenetWeights<T>& w) {
  require_rank(f, 4, "renet input");
  if (f.dim(1) != w.row_fwd.input_size())
    throw DimensionError("renet: input channels vs weights", w.row_fwd.input_size(), f.dim(1));
  const std::size_t n = f.dim(0), h = f.dim(2), wd = f.dim(3);
  const std::size_t k = 2 * w.row_fwd.hidden_size();
  // rows: [N,C,H,W] -> [W, N*H, C]
  auto rows = reshape(permute(f, {3, 0, 2, 1}), {wd, n * h, f.dim(1)});
  auto r = reshape(detail::bidirectional_sweep(rows, w.row_fwd, w.row_bwd), {wd, n, h, k});
  // columns of the row result: [W,N,H,K] -> [H, N*W, K]
  auto cols = reshape(permute(r, {2, 1, 0, 3}), {h, n * wd, k});
  auto c = reshape(detail::bidirectional_sweep(cols, w.col_fwd, w.col_bwd), {h, n, wd, k});
  return permute(c, {1, 3, 0, 2});
}

// ---------------------------------------------------------------------------
// Global attending: per pixel of an m x m pooled grid, softmax over the m*m
// grid cells, then a convex combination of the pooled feature vectors.

template <Real T>
struct GlobalAttentionWeights {
  RenetWeights<T> renet;              // shared by all scales
  std::vector<ConvLayer<T>> logits;   // per scale: 1x1, 2*hidden -> m*m
  ConvLayer<T> project;               // 1x1 back to the input channel count K

  static GlobalAttentionWeights create(ParamStore<T>& store, const std::string& prefix, int channels,
                                       const GlobalAttentionConfig& cfg, ParamGroup group) {
    cfg.validate();
    GlobalAttentionWeights g;
    g.renet = RenetWeights<T>::create(store, prefix + ".renet", channels, cfg.renet_hidden, group);
    for (int m : cfg.scales) {
      const std::string p = prefix + ".logits_s" + std::to_string(m);
      g.logits.push_back(
          ConvLayer<T>::create(store, p, prefix, 2 * cfg.renet_hidden, cfg.depth(m), 1, {}, group));
    }
    const int in = cfg.combine == ScaleCombine::sum ? channels
                                                    : channels * static_cast<int>(cfg.scales.size());
    g.project = ConvLayer<T>::create(store, prefix + ".project", prefix, in, channels, 1, {}, group);
    return g;
  }
};

template <Real T>
struct GlobalScaleResult {
  Tensor<T> attended;  // [N,C,H,W]
  Tensor<T> weights;   // [N,m*m,m,m] softmax weights per pooled pixel
  Tensor<T> pooled;    // [N,C,m,m] attendees
};

template <Real T>
GlobalScaleResult<T> global_attend_scale_detail(const Tensor<T>& f, int m, const GlobalAttentionConfig& cfg,
                                                const GlobalAttentionWeights<T>& w) {
  require_rank(f, 4, "global attention input");
  const std::size_t idx = cfg.scale_index(m);
  auto pooled = adaptive_avg_pool2d(f, m, m);
  auto context = renet_forward(pooled, w.renet);
  auto alpha = softmax_channels(w.logits[idx](context));
  auto attended = attend_global(alpha, pooled);
  auto up = resize_bilinear(attended, static_cast<int>(f.dim(2)), static_cast<int>(f.dim(3)));
  return {up, alpha, pooled};
}

template <Real T>
Tensor<T> global_attend_scale(const Tensor<T>& f, int m, const GlobalAttentionConfig& cfg,
                              const GlobalAttentionWeights<T>& w) {
  return global_attend_scale_detail(f, m, cfg, w).attended;
}

/// Sums (or concatenates) the per-scale maps and projects back to K channels.
/// `weights_out`, when given, receives every scale's attention weights.
template <Real T>
Tensor<T> global_attend_multiscale(const Tensor<T>& f, const GlobalAttentionConfig& cfg,
                                   const GlobalAttentionWeights<T>& w,
                                   std::vector<Tensor<T>>* weights_out = nullptr) {
  std::vector<Tensor<T>> per_scale;
  for (int m : cfg.scales) {
    auto r = global_attend_scale_detail(f, m, cfg, w);
    if (weights_out) weights_out->push_back(r.weights);
    per_scale.push_back(r.attended);
  }
  auto combined = cfg.combine == ScaleCombine::sum ? add_n(per_scale) : concat(per_scale, 1);
  return w.project(combined);
}

// ---------------------------------------------------------------------------
// Local attending: per pixel, softmax over a dilated k x k neighbourhood.

template <Real T>
struct LocalAttentionWeights {
  ConvLayer<T> context;  // k x k, dilated, -> hidden
  ConvLayer<T> logits;   // 1x1, hidden -> k*k

  static LocalAttentionWeights create(ParamStore<T>& store, const std::string& prefix, int channels,
                                      int hidden, const LocalAttentionConfig& cfg, ParamGroup group) {
    cfg.validate();
    const int pad = (cfg.kernel / 2) * cfg.dilation;
    return {ConvLayer<T>::create(store, prefix + ".context", prefix, channels, hidden, cfg.kernel,
                                 {1, pad, cfg.dilation}, group),
            ConvLayer<T>::create(store, prefix + ".logits", prefix, hidden, cfg.taps(), 1, {}, group)};
  }
};

template <Real T>
Tensor<T> local_attend(const Tensor<T>& f, const LocalAttentionConfig& cfg, const LocalAttentionWeights<T>& w,
                       Tensor<T>* weights_out = nullptr) {
  auto alpha = softmax_channels(w.logits(relu(w.context(f))));
  if (weights_out) *weights_out = alpha;
  return attend_local(alpha, f, cfg.kernel, cfg.dilation);
}

}  // namespace salite
