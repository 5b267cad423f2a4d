#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "salite/ops/elementwise.hpp"
#include "salite/rng.hpp"
#include "salite/tape.hpp"

namespace salite {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Denominator floor of the relative error, so exact zeros compare absolutely.
  double floor = 1e-6;
  /// Upper bound on probed coordinates per input; 0 probes all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
  /// When a coordinate fails, re-estimate it with eps/4. If the two estimates disagree by
  /// more than tol the interval straddles a ReLU or max-pool kink; the coordinate is
  /// counted in kinks_skipped instead of the error. A real gradient bug gives estimates
  /// that agree with each other and still fails.
  bool kink_guard = false;
};

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0;
  std::size_t coords_checked = 0;
  std::size_t kinks_skipped = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  bool passed = false;
};

using GradCheckFn = std::function<Tensord(const std::vector<Tensord>&)>;

/// Checks gradients of fn() with respect to `leaves`, perturbing them in place.
/// Leaves keep their values on return; their grad buffers hold the analytic gradient.
/// Non-scalar outputs are reduced with a fixed random projection sum(r * y).
inline GradCheckReport grad_check_leaves(const std::string& name, const std::function<Tensord()>& fn,
                                         const std::vector<Tensord>& leaves, const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  rep.name = name;
  Tensord projection;
  auto objective = [&]() {
    Tensord y = fn();
    if (y.numel() == 1) return y;
    if (!projection.defined()) {
      Rng rng(opt.seed ^ 0xA5A5A5A5ull);
      std::vector<double> r(y.numel());
      for (auto& v : r) v = rng.uniform(-1.0, 1.0);
      projection = Tensord(y.shape(), std::move(r));
    }
    return sum(mul(y, projection));
  };

  for (auto x : leaves) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  backward(objective());
  std::vector<std::vector<double>> analytic;
  for (const auto& x : leaves)
    analytic.emplace_back(x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                       : std::vector<double>(x.numel(), 0.0));

  NoGradGuard no_grad;
  Rng pick(opt.seed);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto x = leaves[k];
    auto values = x.mutable_data();
    std::vector<std::size_t> coords;
    if (opt.max_coords == 0 || opt.max_coords >= values.size()) {
      for (std::size_t i = 0; i < values.size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t j = 0; j < opt.max_coords; ++j) coords.push_back(pick.below(values.size()));
    }
    auto central = [&](std::size_t i, double eps) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = objective().item();
      values[i] = saved - eps;
      const double down = objective().item();
      values[i] = saved;
      return (up - down) / (2 * eps);
    };
    auto rel_error = [&](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), opt.floor});
    };
    for (std::size_t i : coords) {
      const double numeric = central(i, opt.eps);
      const double a = analytic[k][i];
      const double rel = rel_error(a, numeric);
      ++rep.coords_checked;
      if (opt.kink_guard && rel > opt.tol && rel_error(numeric, central(i, opt.eps / 4)) > opt.tol) {
        ++rep.kinks_skipped;
        continue;
      }
      if (rel >= rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_input = k;
        rep.worst_index = i;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  rep.passed = rep.max_rel_error <= opt.tol;
  return rep;
}

/// Compares reverse-mode gradients of fn(inputs) against central differences.
inline GradCheckReport grad_check(const std::string& name, const GradCheckFn& fn, std::vector<Tensord> inputs,
                                  const GradCheckOptions& opt = {}) {
  for (auto& x : inputs) x = x.clone();
  return grad_check_leaves(name, [&] { return fn(inputs); }, inputs, opt);
}

}  // namespace salite
