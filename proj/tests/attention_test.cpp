#include <gtest/gtest.h>

#include <cmath>

#include "salite/attention.hpp"
#include "salite/gradcheck.hpp"
#include "test_util.hpp"

using namespace salite;
using salite::testing::random_tensor;

namespace {

GlobalAttentionConfig small_global(std::vector<int> scales = {5, 7, 10}, int hidden = 3) {
  GlobalAttentionConfig c;
  c.scales = std::move(scales);
  c.renet_hidden = hidden;
  return c;
}

void fill(Tensord t, double v) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), v);
}

// Scalar LSTM over a sequence of vectors, written out gate by gate.
using Vec = std::vector<double>;
std::vector<Vec> lstm_seq(const std::vector<Vec>& xs, const LstmWeights<double>& w, bool reverse) {
  const std::size_t hid = w.hidden_size(), in = w.input_size();
  Vec h(hid, 0.0), c(hid, 0.0);
  std::vector<Vec> out(xs.size());
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t t = reverse ? xs.size() - 1 - k : k;
    Vec gate(4 * hid);
    for (std::size_t r = 0; r < 4 * hid; ++r) {
      double z = w.bias[r];
      for (std::size_t j = 0; j < in; ++j) z += w.input_weight[r * in + j] * xs[t][j];
      for (std::size_t j = 0; j < hid; ++j) z += w.hidden_weight[r * hid + j] * h[j];
      gate[r] = z;
    }
    for (std::size_t u = 0; u < hid; ++u) {
      c[u] = sig(gate[hid + u]) * c[u] + sig(gate[u]) * std::tanh(gate[2 * hid + u]);
      h[u] = sig(gate[3 * hid + u]) * std::tanh(c[u]);
    }
    out[t] = h;
  }
  return out;
}

}  // namespace

TEST(Renet, MatchesScalarOracle) {
  ParamStore<double> store(21);
  auto w = RenetWeights<double>::create(store, "r", 2, 3, ParamGroup::decoder);
  Rng rng(22);
  const std::size_t n = 2, c = 2, h = 3, wd = 4;
  auto f = random_tensor(rng, {n, c, h, wd});
  auto y = renet_forward(f, w);
  ASSERT_EQ(y.shape(), (Shape{n, 6, h, wd}));
  auto at = [&](std::size_t b, std::size_t ch, std::size_t r, std::size_t col) {
    return f[((b * c + ch) * h + r) * wd + col];
  };
  for (std::size_t b = 0; b < n; ++b) {
    // rows: sequence along width
    std::vector<std::vector<Vec>> row_out(h, std::vector<Vec>(wd));
    for (std::size_t r = 0; r < h; ++r) {
      std::vector<Vec> seq(wd);
      for (std::size_t col = 0; col < wd; ++col) seq[col] = {at(b, 0, r, col), at(b, 1, r, col)};
      auto fw = lstm_seq(seq, w.row_fwd, false), bw = lstm_seq(seq, w.row_bwd, true);
      for (std::size_t col = 0; col < wd; ++col) {
        row_out[r][col] = fw[col];
        row_out[r][col].insert(row_out[r][col].end(), bw[col].begin(), bw[col].end());
      }
    }
    // columns: sequence along height of the row result
    for (std::size_t col = 0; col < wd; ++col) {
      std::vector<Vec> seq(h);
      for (std::size_t r = 0; r < h; ++r) seq[r] = row_out[r][col];
      auto fw = lstm_seq(seq, w.col_fwd, false), bw = lstm_seq(seq, w.col_bwd, true);
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t k = 0; k < 6; ++k) {
          const double expect = k < 3 ? fw[r][k] : bw[r][k - 3];
          EXPECT_NEAR(y[((b * 6 + k) * h + r) * wd + col], expect, 1e-12);
        }
    }
  }
}

TEST(Renet, PreservesGridAndZeroCase) {
  ParamStore<double> store(1);
  auto w = RenetWeights<double>::create(store, "r", 4, 3, ParamGroup::decoder);
  Rng rng(2);
  for (std::size_t m : {5, 7, 10}) {
    auto y = renet_forward(random_tensor(rng, {1, 4, m, m}), w);
    EXPECT_EQ(y.shape(), (Shape{1, 6, m, m}));
  }
  for (auto& p : store.all()) fill(p.value, 0.0);
  auto y = renet_forward(Tensord(Shape{1, 4, 5, 5}), w);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(renet_forward(Tensord(Shape{1, 3, 5, 5}), w), DimensionError);
}

TEST(Renet, BatchPermutation) {
  ParamStore<double> store(3);
  auto w = RenetWeights<double>::create(store, "r", 2, 3, ParamGroup::decoder);
  Rng rng(4);
  auto a = random_tensor(rng, {1, 2, 5, 5}), b = random_tensor(rng, {1, 2, 5, 5});
  auto ab = renet_forward(concat<double>({a, b}, 0), w);
  auto ba = renet_forward(concat<double>({b, a}, 0), w);
  const std::size_t half = ab.numel() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    EXPECT_EQ(ab[i], ba[half + i]);
    EXPECT_EQ(ab[half + i], ba[i]);
  }
}

TEST(GlobalAttention, ConstantPreserved) {
  auto cfg = small_global();
  ParamStore<double> store(5);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 3, cfg, ParamGroup::decoder);
  Tensord f(Shape{1, 3, 13, 11}, 0.7);
  for (int m : cfg.scales) {
    auto y = global_attend_scale(f, m, cfg, w);
    EXPECT_EQ(y.shape(), f.shape());
    for (double v : y.data()) EXPECT_NEAR(v, 0.7, 1e-12);
  }
}

TEST(GlobalAttention, SingleCellIsGlobalMean) {
  auto cfg = small_global({1});
  ParamStore<double> store(6);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  Rng rng(7);
  auto f = random_tensor(rng, {1, 2, 6, 9});
  auto y = global_attend_scale(f, 1, cfg, w);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double mean = 0;
    for (std::size_t i = 0; i < 54; ++i) mean += f[ch * 54 + i];
    mean /= 54;
    for (std::size_t i = 0; i < 54; ++i) EXPECT_NEAR(y[ch * 54 + i], mean, 1e-12);
  }
}

TEST(GlobalAttention, ConvexHullOfAttendees) {
  auto cfg = small_global();
  ParamStore<double> store(8);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 3, cfg, ParamGroup::decoder);
  Rng rng(9);
  auto f = random_tensor(rng, {2, 3, 17, 17}, -2, 2);
  auto r = global_attend_scale_detail(f, 5, cfg, w);
  ASSERT_EQ(r.pooled.shape(), (Shape{2, 3, 5, 5}));
  ASSERT_EQ(r.weights.shape(), (Shape{2, 25, 5, 5}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t i = 0; i < 25; ++i) {
        lo = std::min(lo, r.pooled[(b * 3 + ch) * 25 + i]);
        hi = std::max(hi, r.pooled[(b * 3 + ch) * 25 + i]);
      }
      for (std::size_t p = 0; p < 17 * 17; ++p) {
        const double v = r.attended[(b * 3 + ch) * 289 + p];
        EXPECT_GE(v, lo - 1e-12);
        EXPECT_LE(v, hi + 1e-12);
      }
    }
  // weights are a distribution at every pooled pixel
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t p = 0; p < 25; ++p) {
      double s = 0;
      for (std::size_t i = 0; i < 25; ++i) {
        const double a = r.weights[(b * 25 + i) * 25 + p];
        EXPECT_GT(a, 0.0);
        s += a;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(GlobalAttention, AttendMatchesExplicitSum) {
  auto cfg = small_global({5});
  ParamStore<double> store(10);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  Rng rng(11);
  auto f = random_tensor(rng, {1, 2, 5, 5});
  auto r = global_attend_scale_detail(f, 5, cfg, w);
  // m equals the map size: pooling and the final resize are identities
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t p = 0; p < 25; ++p) {
      double s = 0;
      for (std::size_t i = 0; i < 25; ++i) s += r.weights[i * 25 + p] * f[ch * 25 + i];
      EXPECT_NEAR(r.attended[ch * 25 + p], s, 1e-12);
    }
}

TEST(GlobalAttention, TransposeConsistentAttendStage) {
  Rng rng(12);
  const std::size_t m = 4, c = 3;
  auto alpha = softmax_channels(random_tensor(rng, {1, m * m, m, m}, -3, 3));
  auto vals = random_tensor(rng, {1, c, m, m});
  // transpose the attendee grid, the pixel grid, and the attendee index of the weights
  Tensord alpha_t(alpha.shape()), vals_t(vals.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) vals_t.mutable_data()[(ch * m + j) * m + i] = vals[(ch * m + i) * m + j];
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          alpha_t.mutable_data()[((b * m + a) * m + j) * m + i] = alpha[((a * m + b) * m + i) * m + j];
    }
  auto y = attend_global(alpha, vals);
  auto yt = attend_global(alpha_t, vals_t);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        EXPECT_NEAR(yt[(ch * m + j) * m + i], y[(ch * m + i) * m + j], 1e-12);

  // same for the local gather with taps mirrored across the diagonal
  const int k = 3, dil = 2;
  auto beta = softmax_channels(random_tensor(rng, {1, 9, 6, 6}, -3, 3));
  auto feat = random_tensor(rng, {1, 2, 6, 6});
  Tensord beta_t(beta.shape()), feat_t(feat.shape());
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t ch = 0; ch < 2; ++ch) feat_t.mutable_data()[(ch * 6 + j) * 6 + i] = feat[(ch * 6 + i) * 6 + j];
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          beta_t.mutable_data()[((b * k + a) * 6 + j) * 6 + i] = beta[((a * k + b) * 6 + i) * 6 + j];
    }
  auto z = attend_local(beta, feat, k, dil);
  auto zt = attend_local(beta_t, feat_t, k, dil);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        EXPECT_NEAR(zt[(ch * 6 + j) * 6 + i], z[(ch * 6 + i) * 6 + j], 1e-12);
}

TEST(GlobalAttention, UnknownScaleThrows) {
  auto cfg = small_global();
  ParamStore<double> store(1);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  EXPECT_THROW(global_attend_scale(Tensord(Shape{1, 2, 8, 8}), 6, cfg, w), std::invalid_argument);
  auto bad = small_global({7, 5});
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(GlobalMultiscale, ConstantThroughSum) {
  auto cfg = small_global();
  ParamStore<double> store(13);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  // project: average of the two channels into each output, zero bias
  fill(w.project.weight, 0.5);
  fill(w.project.bias, 0.0);
  auto y = global_attend_multiscale(Tensord(Shape{1, 2, 12, 12}, 0.4), cfg, w);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 12, 12}));
  for (double v : y.data()) EXPECT_NEAR(v, 0.5 * (3 * 0.4) * 2, 1e-12);
}

TEST(GlobalMultiscale, AdditiveOverScales) {
  auto cfg = small_global();
  ParamStore<double> store(14);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 3, cfg, ParamGroup::decoder);
  Rng rng(15);
  auto f = random_tensor(rng, {1, 3, 12, 12});
  std::vector<Tensord> alphas;
  auto y = global_attend_multiscale(f, cfg, w, &alphas);
  EXPECT_EQ(alphas.size(), 3u);
  EXPECT_EQ(alphas[2].shape(), (Shape{1, 100, 10, 10}));
  std::vector<Tensord> parts;
  for (int m : cfg.scales) parts.push_back(global_attend_scale(f, m, cfg, w));
  auto expect = w.project(add_n(parts));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);

  // only the m=7 path, then the 1x1 projection
  auto only = w.project(parts[1]);
  auto y7 = global_attend_multiscale(f, small_global({7}), GlobalAttentionWeights<double>{w.renet, {w.logits[1]}, w.project});
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y7[i], only[i], 1e-12);
}

TEST(GlobalMultiscale, ConcatMode) {
  auto cfg = small_global();
  cfg.combine = ScaleCombine::concat;
  ParamStore<double> store(16);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  EXPECT_EQ(w.project.weight.shape(), (Shape{2, 6, 1, 1}));
  Rng rng(17);
  auto y = global_attend_multiscale(random_tensor(rng, {1, 2, 11, 11}), cfg, w);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 11, 11}));
}

TEST(LocalAttention, ConstantInterior) {
  LocalAttentionConfig cfg;
  ParamStore<double> store(18);
  auto w = LocalAttentionWeights<double>::create(store, "l", 2, 4, cfg, ParamGroup::decoder);
  Tensord f(Shape{1, 2, 15, 15}, -1.3);
  Tensord alpha;
  auto y = local_attend(f, cfg, w, &alpha);
  EXPECT_EQ(alpha.shape(), (Shape{1, 49, 15, 15}));
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t i = 6; i < 9; ++i)
      for (std::size_t j = 6; j < 9; ++j) EXPECT_NEAR(y[(ch * 15 + i) * 15 + j], -1.3, 1e-12);
}

TEST(LocalAttention, SinglePixelOnlyCenterTap) {
  LocalAttentionConfig cfg;
  ParamStore<double> store(19);
  auto w = LocalAttentionWeights<double>::create(store, "l", 3, 4, cfg, ParamGroup::decoder);
  Rng rng(20);
  auto f = random_tensor(rng, {1, 3, 1, 1});
  Tensord alpha;
  auto y = local_attend(f, cfg, w, &alpha);
  for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_NEAR(y[ch], alpha[24] * f[ch], 1e-14);
}

TEST(LocalAttention, CenterPixelBruteForce) {
  LocalAttentionConfig cfg;
  ParamStore<double> store(23);
  auto w = LocalAttentionWeights<double>::create(store, "l", 2, 4, cfg, ParamGroup::decoder);
  Rng rng(24);
  auto f = random_tensor(rng, {1, 2, 9, 9});
  Tensord alpha;
  auto y = local_attend(f, cfg, w, &alpha);
  // every pixel, including the zero-padded border ones
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c)
      for (int ch = 0; ch < 2; ++ch) {
        double s = 0;
        for (int a = 0; a < 7; ++a)
          for (int b = 0; b < 7; ++b) {
            const int rr = r + (a - 3) * 2, cc = c + (b - 3) * 2;
            if (rr < 0 || rr >= 9 || cc < 0 || cc >= 9) continue;
            s += alpha[((a * 7 + b) * 9 + r) * 9 + c] * f[(ch * 9 + rr) * 9 + cc];
          }
        EXPECT_NEAR(y[(ch * 9 + r) * 9 + c], s, 1e-12);
      }
}

TEST(AttentionGradCheck, GlobalPath) {
  auto cfg = small_global({1, 2, 3}, 2);
  ParamStore<double> store(25);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  Rng rng(26);
  auto f = random_tensor(rng, {1, 2, 5, 4});
  std::vector<Tensord> leaves{f};
  for (auto& p : store.all()) leaves.push_back(p.value);
  auto rep = grad_check_leaves("global", [&] { return global_attend_multiscale(f, cfg, w); }, leaves);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at input " << rep.worst_input;
}

TEST(AttentionGradCheck, GlobalPathDefaultScales) {
  auto cfg = small_global({5, 7, 10}, 2);
  ParamStore<double> store(27);
  auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
  Rng rng(28);
  auto f = random_tensor(rng, {1, 2, 12, 12});
  std::vector<Tensord> leaves{f};
  for (auto& p : store.all()) leaves.push_back(p.value);
  GradCheckOptions opt;
  opt.max_coords = 40;
  auto rep = grad_check_leaves("global-5-7-10", [&] { return global_attend_multiscale(f, cfg, w); }, leaves, opt);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at input " << rep.worst_input;
}

TEST(AttentionGradCheck, LocalPath) {
  LocalAttentionConfig cfg;
  cfg.kernel = 3;
  ParamStore<double> store(29);
  auto w = LocalAttentionWeights<double>::create(store, "l", 2, 3, cfg, ParamGroup::decoder);
  Rng rng(30);
  auto f = random_tensor(rng, {1, 2, 6, 5});
  std::vector<Tensord> leaves{f};
  for (auto& p : store.all()) leaves.push_back(p.value);
  auto rep = grad_check_leaves("local", [&] { return local_attend(f, cfg, w); }, leaves);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at input " << rep.worst_input;
}

TEST(AttentionGradCheck, LocalPathDefaultKernel) {
  LocalAttentionConfig cfg;
  ParamStore<double> store(31);
  auto w = LocalAttentionWeights<double>::create(store, "l", 2, 2, cfg, ParamGroup::decoder);
  Rng rng(32);
  auto f = random_tensor(rng, {1, 2, 9, 9});
  std::vector<Tensord> leaves{f};
  for (auto& p : store.all()) leaves.push_back(p.value);
  GradCheckOptions opt;
  opt.max_coords = 60;
  auto rep = grad_check_leaves("local-7x7", [&] { return local_attend(f, cfg, w); }, leaves, opt);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at input " << rep.worst_input;
}
