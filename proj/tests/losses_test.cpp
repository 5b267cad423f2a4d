#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "salite/gradcheck.hpp"
#include "salite/losses.hpp"
#include "test_util.hpp"

using namespace salite;
using salite::testing::random_tensor;

namespace {

Tensord map4(std::size_t h, std::size_t w, std::vector<double> v) { return Tensord(Shape{1, 1, h, w}, std::move(v)); }

// Union-find labelling and brute-force nearest-border search.
std::vector<double> boundary_oracle(const std::vector<int>& m, int h, int w, double w0, double sigma) {
  std::vector<int> parent(h * w);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (m[r * w + c] && m[rr * w + cc]) parent[find(r * w + c)] = find(rr * w + cc);
        }
  std::map<int, std::vector<std::pair<int, int>>> borders;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!m[r * w + c]) continue;
      bool b = false;
      const int nb[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      for (auto& d : nb) {
        const int rr = r + d[0], cc = c + d[1];
        if (rr >= 0 && rr < h && cc >= 0 && cc < w && !m[rr * w + cc]) b = true;
      }
      if (b) borders[find(r * w + c)].push_back({r, c});
    }
  std::vector<double> out(h * w, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::vector<double> d;
      for (auto& [root, pts] : borders) {
        double best = 1e300;
        for (auto [pr, pc] : pts) best = std::min(best, std::hypot(double(r - pr), double(c - pc)));
        d.push_back(best);
      }
      if (d.empty()) continue;
      std::sort(d.begin(), d.end());
      const double s = d[0] + (d.size() > 1 ? d[1] : d[0]);
      out[r * w + c] = w0 * std::exp(-s * s / (2 * sigma * sigma));
    }
  return out;
}

}  // namespace

TEST(PatchGrid, CoversEveryPixelOnce) {
  PatchGrid g(224, 224, 5);
  EXPECT_EQ(g.tiles.size(), 45u * 45u);
  std::vector<int> hits(224 * 224, 0);
  for (const auto& t : g.tiles) {
    EXPECT_LE(t.height, 5);
    EXPECT_LE(t.width, 5);
    for (int r = 0; r < t.height; ++r)
      for (int c = 0; c < t.width; ++c) ++hits[(t.row + r) * 224 + t.col + c];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_EQ(g.tiles.back().height, 4);
  EXPECT_EQ(g.tiles.back().width, 4);
  for (int o : g.owner()) EXPECT_GE(o, 0);
}

TEST(BoundaryWeight, MatchesBruteForceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = 5 + static_cast<int>(rng.below(12)), w = 5 + static_cast<int>(rng.below(12));
    std::vector<int> m(h * w, 0);
    const int blobs = static_cast<int>(rng.below(4));
    for (int b = 0; b < blobs; ++b) {
      const int r0 = rng.below(h), c0 = rng.below(w), rh = 1 + rng.below(5), rw = 1 + rng.below(5);
      for (int r = r0; r < std::min(h, r0 + rh); ++r)
        for (int c = c0; c < std::min(w, c0 + rw); ++c) m[r * w + c] = 1;
    }
    if (trial % 7 == 0)
      for (auto& v : m) v = rng.below(3) == 0;
    std::vector<double> mv(m.begin(), m.end());
    auto got = boundary_weight_map(Tensord(Shape{std::size_t(h), std::size_t(w)}, mv));
    auto want = boundary_oracle(m, h, w, 0.6, 5.0);
    for (int i = 0; i < h * w; ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << "trial " << trial << " pixel " << i;
  }
}

TEST(BoundaryWeight, Examples) {
  // border pixel of the single component: d1 = d2 = 0
  Tensord one(Shape{11, 11}, 0.0);
  one.mutable_data()[0] = 1.0;
  auto w = boundary_weight_map(one);
  EXPECT_DOUBLE_EQ(w[0], 0.6);
  // distance 5 from the only border pixel, d2 = d1 = 5
  EXPECT_NEAR(w[5], 0.6 * std::exp(-2.0), 1e-15);
  EXPECT_NEAR(w[5], 0.0812, 5e-5);
  auto bg = boundary_weight_map(Tensord(Shape{8, 8}, 0.0));
  for (double v : bg.data()) EXPECT_EQ(v, 0.0);
  auto fg = boundary_weight_map(Tensord(Shape{8, 8}, 1.0));
  for (double v : fg.data()) EXPECT_EQ(v, 0.0);
}

TEST(BalancedBce, SingleTwoByTwoPatchOracle) {
  auto s = map4(2, 2, {0.5, 0.5, 0.5, 0.5});
  auto g = map4(2, 2, {1, 0, 0, 0});
  Tensord zero(Shape{1, 1, 2, 2}, 0.0);
  auto l = balanced_bce_patch(s, g, zero, PatchGrid(2, 2, 5));
  // positive weight N-/N = 3/4, each negative N+/N = 1/4, patch mean over 4 pixels
  const double want = (0.75 * std::log(2.0) + 3 * 0.25 * std::log(2.0)) / 4.0;
  EXPECT_NEAR(l.item(), want, 1e-15);
}

TEST(BalancedBce, UniformPatchHasZeroBalanceWeight) {
  // intentional: a patch with no positives gives its negatives weight N+/N = 0
  Tensord s(Shape{1, 1, 5, 5}, 0.5), g(Shape{1, 1, 5, 5}, 0.0), w(Shape{1, 1, 5, 5}, 0.0);
  EXPECT_EQ(balanced_bce_patch(s, g, w, PatchGrid(5, 5)).item(), 0.0);
}

TEST(BalancedBce, MinimisedAtTarget) {
  Rng rng(2);
  std::vector<double> gv(100);
  for (auto& v : gv) v = rng.below(2);
  auto g = map4(10, 10, gv);
  auto bw = boundary_weight_batch(g);
  PatchGrid grid(10, 10);
  const double at_target = balanced_bce_patch(g, g, bw, grid).item();
  EXPECT_LE(at_target, 10 * 1e-7 * 1.6);
  for (int k = 0; k < 20; ++k) {
    auto s = g.clone();
    auto d = s.mutable_data();
    const std::size_t i = rng.below(100);
    d[i] = gv[i] > 0.5 ? rng.uniform(0.01, 0.99) : rng.uniform(0.01, 0.99);
    EXPECT_GT(balanced_bce_patch(s, g, bw, grid).item(), at_target);
  }
}

TEST(Huber, Examples) {
  PatchGrid grid(1, 1);
  auto one = [&](double s, double g, double delta) {
    return huber_patch(map4(1, 1, {s}), map4(1, 1, {g}), grid, delta).item();
  };
  EXPECT_EQ(one(0.3, 0.3, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(one(0.0, 0.5, 1.0), 0.125);
  EXPECT_DOUBLE_EQ(one(0.0, 2.0, 1.0), 1.5);
  EXPECT_NEAR(huber(1.0, 1.0), 0.5, 1e-12);
  // both branches meet at |e| = delta in value and slope
  for (double delta : {0.3, 1.0, 2.5}) {
    const double h = 1e-9;
    EXPECT_NEAR(huber(delta, delta), 0.5 * delta * delta, 1e-12);
    EXPECT_NEAR(huber(delta - h, delta), huber(delta + h, delta), 1e-12 + 2.5 * delta * h);
    const double left = (huber(delta, delta) - huber(delta - 1e-6, delta)) / 1e-6;
    const double right = (huber(delta + 1e-6, delta) - huber(delta, delta)) / 1e-6;
    EXPECT_NEAR(left, right, 1e-5);
    auto s = map4(1, 1, {0.0});
    s.set_requires_grad(true);
    backward(huber_patch(s, map4(1, 1, {delta}), grid, delta));
    EXPECT_NEAR(s.grad()[0], -delta, 1e-12);
  }
}

TEST(TotalLoss, CombinationAndGradientLinearity) {
  Rng rng(3);
  auto s = random_tensor(rng, {2, 1, 12, 11}, 0.05, 0.95);
  std::vector<double> gv(s.numel());
  for (auto& v : gv) v = rng.below(2);
  Tensord g(s.shape(), gv);
  s.set_requires_grad(true);
  auto terms = total_loss(s, g);
  EXPECT_NEAR(terms.total.item(), 0.6 * terms.bce.item() + 0.4 * terms.huber.item(), 1e-15);

  // recompute each term independently of the fused kernels
  auto bw = boundary_weight_batch(g);
  PatchGrid grid(12, 11);
  double bce = 0, hub = 0;
  for (std::size_t b = 0; b < 2; ++b)
    for (const auto& t : grid.tiles) {
      double pos = 0, cnt = t.height * t.width, pb = 0, ph = 0;
      for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) pos += g[b * 132 + (t.row + r) * 11 + t.col + c];
      for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) {
          const std::size_t i = b * 132 + (t.row + r) * 11 + t.col + c;
          const double y = g[i], p = s[i];
          const double bal = y > 0.5 ? (cnt - pos) / cnt : pos / cnt;
          pb += bal * (1 + bw[i]) * -(y * std::log(p) + (1 - y) * std::log(1 - p));
          ph += 0.5 * (y - p) * (y - p);
        }
      bce += pb / cnt;
      hub += ph / cnt;
    }
  bce /= 2.0 * grid.tiles.size();
  hub /= 2.0 * grid.tiles.size();
  EXPECT_NEAR(terms.bce.item(), bce, 1e-12);
  EXPECT_NEAR(terms.huber.item(), hub, 1e-12);

  backward(terms.total);
  std::vector<double> g_total(s.grad().begin(), s.grad().end());
  s.zero_grad();
  backward(total_loss(s, g).bce);
  std::vector<double> g_bce(s.grad().begin(), s.grad().end());
  s.zero_grad();
  backward(total_loss(s, g).huber);
  for (std::size_t i = 0; i < s.numel(); ++i) EXPECT_NEAR(g_total[i], 0.6 * g_bce[i] + 0.4 * s.grad()[i], 1e-15);
}

TEST(TotalLoss, DefaultWeightsExample) {
  // BCE part 0.5, Huber part 0.25
  EXPECT_DOUBLE_EQ(0.6 * 0.5 + 0.4 * 0.25, 0.4);
  LossWeights lw;
  EXPECT_EQ(lw.lambda1, 0.6);
  EXPECT_EQ(lw.lambda2, 0.4);
  EXPECT_EQ(lw.w0, 0.6);
  EXPECT_EQ(lw.delta, 1.0);
}

TEST(TotalLoss, NearZeroAtTarget) {
  Rng rng(4);
  std::vector<double> gv(144);
  for (auto& v : gv) v = rng.below(2);
  Tensord g(Shape{1, 1, 12, 12}, gv);
  EXPECT_LT(total_loss(g, g).total.item(), 1e-5);
}

TEST(TotalLoss, GradCheckRandomMaps) {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> gv(100);
    for (auto& v : gv) v = rng.below(2);
    Tensord g(Shape{1, 1, 10, 10}, gv);
    auto s = random_tensor(rng, {1, 1, 10, 10}, 0.05, 0.95);
    auto rep = grad_check(
        "total_loss", [&](const std::vector<Tensord>& x) { return total_loss(x[0], g).total; }, {s});
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  }
}

TEST(TotalLoss, StrictModeBoundaryTermHasNoGradient) {
  Rng rng(6);
  std::vector<double> gv(100);
  for (auto& v : gv) v = rng.below(2);
  Tensord g(Shape{1, 1, 10, 10}, gv);
  auto s = random_tensor(rng, {1, 1, 10, 10}, 0.05, 0.95);
  s.set_requires_grad(true);
  LossWeights strict;
  strict.eq5_strict = true;
  PatchGrid grid(10, 10);
  auto bw = boundary_weight_batch(g);
  Tensord none(g.shape(), 0.0);

  backward(balanced_bce_patch(s, g, bw, grid, strict));
  std::vector<double> with_term(s.grad().begin(), s.grad().end());
  s.zero_grad();
  backward(balanced_bce_patch(s, g, none, grid, strict));
  for (std::size_t i = 0; i < s.numel(); ++i) EXPECT_EQ(with_term[i], s.grad()[i]);
  // the term does change the value, so it is present but inert
  EXPECT_GT(balanced_bce_patch(s, g, bw, grid, strict).item(), balanced_bce_patch(s, g, none, grid, strict).item());

  // the default weighting does move the gradient
  s.zero_grad();
  backward(balanced_bce_patch(s, g, bw, grid));
  double diff = 0;
  for (std::size_t i = 0; i < s.numel(); ++i) diff += std::abs(s.grad()[i] - with_term[i]);
  EXPECT_GT(diff, 1e-3);
}

TEST(TotalLoss, ClampsExtremes) {
  auto s = map4(1, 2, {0.0, 1.0});
  auto g = map4(1, 2, {1.0, 0.0});
  s.set_requires_grad(true);
  auto t = total_loss(s, g);
  EXPECT_TRUE(std::isfinite(t.total.item()));
  backward(t.bce);
  for (double v : s.grad()) EXPECT_TRUE(std::isfinite(v));
}

TEST(TotalLoss, ShapeMismatchThrows) {
  EXPECT_THROW(total_loss(Tensord(Shape{1, 1, 4, 4}, 0.5), Tensord(Shape{1, 1, 4, 5}, 0.0)), DimensionError);
  EXPECT_THROW(total_loss(Tensord(Shape{1, 2, 4, 4}, 0.5), Tensord(Shape{1, 2, 4, 4}, 0.0)), DimensionError);
}
