#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "salite/ops/conv.hpp"
#include "salite/rng.hpp"
#include "salite/tensor.hpp"

namespace salite {

/// Optimizer groups; each gets its own learning rate.
enum class ParamGroup { encoder, decoder };

enum class Init {
  kaiming_uniform,  // U(-sqrt(6/fan_in), sqrt(6/fan_in))
  lstm_uniform,     // U(-1/sqrt(hidden), 1/sqrt(hidden))
  zeros,
};

template <Real T>
struct Parameter {
  std::string name;   // e.g. "decoder.stage3.local.logits.weight"
  std::string layer;  // grouping key for parameter reports, e.g. "decoder.stage3.local"
  Tensor<T> value;
  ParamGroup group;
  bool decay;  // false for every bias
};

/// Ordered registry of learnable tensors. Registration order is the
/// initialization order, the checkpoint order, and the update order.
template <Real T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> add(const std::string& name, const std::string& layer, Shape shape, ParamGroup group,
                Init init, double fan) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
    Tensor<T> t(std::move(shape));
    if (init != Init::zeros) {
      const double bound = init == Init::kaiming_uniform ? std::sqrt(6.0 / fan) : 1.0 / std::sqrt(fan);
      for (auto& v : t.mutable_data()) v = static_cast<T>(rng_.uniform(-bound, bound));
    }
    t.set_requires_grad(true);
    const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    index_[name] = params_.size();
    params_.push_back({name, layer, t, group, !is_bias});
    return t;
  }

  /// Convolution weight [out,in,k,k] (Kaiming, fan-in in*k*k) plus zero bias [out].
  std::pair<Tensor<T>, Tensor<T>> add_conv(const std::string& prefix, const std::string& layer,
                                           int in, int out, int k, ParamGroup group) {
    auto w = add(prefix + ".weight", layer,
                 Shape{static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                       static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                 group, Init::kaiming_uniform, static_cast<double>(in) * k * k);
    auto b = add(prefix + ".bias", layer, Shape{static_cast<std::size_t>(out)}, group, Init::zeros, 1);
    return {w, b};
  }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

 private:
  Rng rng_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Learnable convolution with fixed hyperparameters.
template <Real T>
struct ConvLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  ConvArgs args;

  static ConvLayer create(ParamStore<T>& store, const std::string& prefix, const std::string& layer,
                          int in, int out, int kernel, ConvArgs args, ParamGroup group) {
    auto [w, b] = store.add_conv(prefix, layer, in, out, kernel, group);
    return {w, b, args};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, args); }
};

/// Fills every bias with U(-amplitude, amplitude). Zero biases put ReLU inputs exactly on
/// the kink wherever the layer input is zero, which finite differences cannot resolve.
template <Real T>
void randomize_biases(ParamStore<T>& store, std::uint64_t seed, double amplitude) {
  Rng rng(seed);
  for (auto& p : store.all())
    if (!p.decay)
      for (auto& v : p.value.mutable_data()) v = static_cast<T>(rng.uniform(-amplitude, amplitude));
}

struct ParamCount {
  long long total = 0;
  std::vector<std::pair<std::string, long long>> per_layer;  // registration order
};

/// Exact learnable-scalar count, optionally restricted to names starting with `prefix`.
template <Real T>
ParamCount count_params(const ParamStore<T>& store, const std::string& prefix = "") {
  ParamCount pc;
  for (const auto& p : store.all()) {
    if (p.name.compare(0, prefix.size(), prefix) != 0) continue;
    const auto n = static_cast<long long>(p.value.numel());
    pc.total += n;
    if (pc.per_layer.empty() || pc.per_layer.back().first != p.layer)
      pc.per_layer.emplace_back(p.layer, 0);
    pc.per_layer.back().second += n;
  }
  return pc;
}

}  // namespace salite
