#pragma once

#include <functional>
#include <string>
#include <vector>

#include "salite/gradcheck.hpp"
#include "salite/losses.hpp"
#include "salite/model.hpp"

namespace salite {

/// A named finite-difference check in 64-bit arithmetic. `tol` is the pass bar for max relative error.
struct GradCheckCase {
  std::string name;
  double tol;
  std::function<GradCheckReport(double tol)> run;
};

namespace detail {

inline Tensord gc_random(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensord(std::move(shape), std::move(v));
}

inline GradCheckOptions gc_opts(double tol, std::size_t max_coords = 0) {
  GradCheckOptions o;
  o.tol = tol;
  o.max_coords = max_coords;
  return o;
}

inline GradCheckReport gc_params(const std::string& name, const Tensord& x, ParamStore<double>& store,
                                 const std::function<Tensord()>& fn, const GradCheckOptions& opt) {
  std::vector<Tensord> leaves{x};
  for (auto& p : store.all()) leaves.push_back(p.value);
  return grad_check_leaves(name, fn, leaves, opt);
}

}  // namespace detail

/// Elementary ops first, then composite layers, then the reduced-geometry network.
inline std::vector<GradCheckCase> gradcheck_cases() {
  using detail::gc_opts;
  using detail::gc_random;
  using V = std::vector<Tensord>;
  std::vector<GradCheckCase> cases;
  auto op = [&](std::string name, std::uint64_t seed, std::function<Tensord(const V&)> fn,
                std::function<V(Rng&)> inputs) {
    cases.push_back({name, 1e-4, [=](double tol) {
                       Rng rng(seed);
                       return grad_check(name, fn, inputs(rng), gc_opts(tol));
                     }});
  };

  op("conv2d", 101, [](const V& v) { return conv2d(v[0], v[1], v[2], {1, 2, 2}); },
     [](Rng& r) { return V{gc_random(r, {1, 2, 7, 8}), gc_random(r, {3, 2, 3, 3}), gc_random(r, {3})}; });
  op("conv2d_strided", 102, [](const V& v) { return conv2d(v[0], v[1], v[2], {2, 1, 1}); },
     [](Rng& r) { return V{gc_random(r, {2, 2, 7, 7}), gc_random(r, {3, 2, 3, 3}), gc_random(r, {3})}; });
  op("linear", 103, [](const V& v) { return linear(v[0], v[1], v[2]); },
     [](Rng& r) { return V{gc_random(r, {3, 4}), gc_random(r, {5, 4}), gc_random(r, {5})}; });
  op("relu", 104, [](const V& v) { return relu(v[0]); },
     [](Rng& r) {
       // keep samples away from the kink
       auto x = gc_random(r, {4, 6}, 0.1, 1.0);
       auto d = x.mutable_data();
       for (std::size_t i = 0; i < d.size(); i += 2) d[i] = -d[i];
       return V{x};
     });
  op("sigmoid", 105, [](const V& v) { return sigmoid(v[0]); }, [](Rng& r) { return V{gc_random(r, {4, 6}, -4, 4)}; });
  op("tanh", 106, [](const V& v) { return tanh(v[0]); }, [](Rng& r) { return V{gc_random(r, {4, 6}, -3, 3)}; });
  op("add_sub_mul_scale", 107, [](const V& v) { return scale(mul(add(v[0], v[1]), sub(v[0], v[1])), 0.7); },
     [](Rng& r) { return V{gc_random(r, {3, 5}), gc_random(r, {3, 5})}; });
  op("max_pool2d", 108, [](const V& v) { return pool2d(v[0], PoolKind::max, 3, 2); },
     [](Rng& r) { return V{gc_random(r, {1, 2, 9, 9})}; });
  op("avg_pool2d", 109, [](const V& v) { return pool2d(v[0], PoolKind::avg, 3, 2); },
     [](Rng& r) { return V{gc_random(r, {1, 2, 9, 8})}; });
  op("adaptive_avg_pool2d", 110, [](const V& v) { return adaptive_avg_pool2d(v[0], 5, 3); },
     [](Rng& r) { return V{gc_random(r, {1, 2, 12, 7})}; });
  op("resize_bilinear", 111, [](const V& v) { return resize_bilinear(v[0], 11, 9); },
     [](Rng& r) { return V{gc_random(r, {1, 2, 5, 6})}; });
  op("concat_slice_permute", 112,
     [](const V& v) {
       auto c = concat<double>({v[0], v[1]}, 1);
       return permute(slice(c, 1, 1, 4), {2, 0, 1});
     },
     [](Rng& r) { return V{gc_random(r, {2, 3, 4}), gc_random(r, {2, 2, 4})}; });
  op("softmax_channels", 113, [](const V& v) { return softmax_channels(v[0]); },
     [](Rng& r) { return V{gc_random(r, {1, 9, 3, 4}, -2, 2)}; });
  op("lstm_cell", 114,
     [](const V& v) {
       auto s = lstm_cell(v[0], {v[1], v[2]}, {v[3], v[4], v[5]});
       return concat<double>({s.h, s.c}, 1);
     },
     [](Rng& r) {
       return V{gc_random(r, {2, 3}),  gc_random(r, {2, 3}),  gc_random(r, {2, 3}),
                gc_random(r, {12, 3}), gc_random(r, {12, 3}), gc_random(r, {12})};
     });
  op("attend_global", 115, [](const V& v) { return attend_global(softmax_channels(v[0]), v[1]); },
     [](Rng& r) { return V{gc_random(r, {1, 9, 3, 3}), gc_random(r, {1, 3, 3, 3})}; });
  op("attend_local", 116, [](const V& v) { return attend_local(softmax_channels(v[0]), v[1], 7, 2); },
     [](Rng& r) { return V{gc_random(r, {1, 49, 6, 7}), gc_random(r, {1, 2, 6, 7})}; });

  auto mask_of = [](Rng& r) {
    std::vector<double> g(100);
    for (auto& v : g) v = static_cast<double>(r.below(2));
    return Tensord(Shape{1, 1, 10, 10}, g);
  };
  cases.push_back({"balanced_bce_patch", 1e-4, [=](double tol) {
                     Rng r(117);
                     auto g = mask_of(r);
                     LossWeights lw;
                     PatchGrid grid(10, 10, lw.patch);
                     auto b = boundary_weight_map(g, lw);
                     return grad_check("balanced_bce_patch",
                                       [&](const V& v) { return balanced_bce_patch(v[0], g, b, grid, lw); },
                                       {gc_random(r, {1, 1, 10, 10}, 0.05, 0.95)}, gc_opts(tol));
                   }});
  cases.push_back({"huber_patch", 1e-4, [=](double tol) {
                     Rng r(118);
                     auto g = mask_of(r);
                     PatchGrid grid(10, 10, 5);
                     // delta 0.2 so both branches are exercised by |s - g| in (0, 1)
                     return grad_check("huber_patch", [&](const V& v) { return huber_patch(v[0], g, grid, 0.2); },
                                       {gc_random(r, {1, 1, 10, 10}, 0.05, 0.95)}, gc_opts(tol));
                   }});
  cases.push_back({"total_loss", 1e-4, [=](double tol) {
                     Rng r(119);
                     auto g = mask_of(r);
                     return grad_check("total_loss", [&](const V& v) { return total_loss(v[0], g).total; },
                                       {gc_random(r, {1, 1, 10, 10}, 0.05, 0.95)}, gc_opts(tol));
                   }});

  cases.push_back({"fire", 1e-4, [](double tol) {
                     FireSpec f{3, 2, 2, 3};
                     ParamStore<double> store(120);
                     auto w = FireWeights<double>::create(store, "fire", f, ParamGroup::encoder);
                     randomize_biases(store, 121, 0.1);
                     Rng r(122);
                     auto x = gc_random(r, {1, 3, 5, 6});
                     auto opt = gc_opts(tol);
                     opt.kink_guard = true;
                     return detail::gc_params("fire", x, store, [&] { return fire_forward(x, f, w); }, opt);
                   }});
  cases.push_back({"renet", 1e-4, [](double tol) {
                     ParamStore<double> store(123);
                     auto w = RenetWeights<double>::create(store, "renet", 2, 3, ParamGroup::decoder);
                     Rng r(124);
                     auto x = gc_random(r, {1, 2, 3, 4});
                     return detail::gc_params("renet", x, store, [&] { return renet_forward(x, w); }, gc_opts(tol));
                   }});
  cases.push_back({"global_attend", 1e-4, [](double tol) {
                     GlobalAttentionConfig cfg;
                     cfg.scales = {5, 7, 10};
                     cfg.renet_hidden = 2;
                     ParamStore<double> store(125);
                     auto w = GlobalAttentionWeights<double>::create(store, "g", 2, cfg, ParamGroup::decoder);
                     Rng r(126);
                     auto x = gc_random(r, {1, 2, 12, 12});
                     return detail::gc_params("global_attend", x, store,
                                              [&] { return global_attend_multiscale(x, cfg, w); }, gc_opts(tol, 40));
                   }});
  cases.push_back({"local_attend", 1e-4, [](double tol) {
                     LocalAttentionConfig cfg;
                     ParamStore<double> store(127);
                     auto w = LocalAttentionWeights<double>::create(store, "l", 2, 2, cfg, ParamGroup::decoder);
                     randomize_biases(store, 128, 0.1);
                     Rng r(129);
                     auto x = gc_random(r, {1, 2, 9, 9});
                     auto opt = gc_opts(tol, 60);
                     opt.kink_guard = true;
                     return detail::gc_params("local_attend", x, store, [&] { return local_attend(x, cfg, w); }, opt);
                   }});

  cases.push_back({"salite-56", 1e-3, [](double tol) {
                     auto spec = ModelSpec::standard(56, 32);
                     spec.decoder.global.renet_hidden = 2;
                     SaliteModel<double> model(spec, 11);
                     randomize_biases(model.params(), 13, 0.1);
                     Rng r(12);
                     auto img = gc_random(r, {1, 3, 56, 56}, -2, 2);
                     auto opt = gc_opts(tol, 4);
                     opt.kink_guard = true;
                     // objective round-off is ~1e-14, so central differences carry ~1e-9 absolute noise
                     opt.floor = 1e-5;
                     return detail::gc_params("salite-56", img, model.params(), [&] { return model(img); }, opt);
                   }});
  return cases;
}

}  // namespace salite
