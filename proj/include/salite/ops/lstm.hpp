#pragma once

#include <utility>

#include "salite/ops/conv.hpp"
#include "salite/ops/elementwise.hpp"
#include "salite/ops/layout.hpp"

namespace salite {

/// Gate rows are stacked in the order input, forget, cell, output.
template <Real T>
struct LstmWeights {
  Tensor<T> input_weight;   // [4H, I]
  Tensor<T> hidden_weight;  // [4H, H]
  Tensor<T> bias;           // [4H]

  std::size_t hidden_size() const { return hidden_weight.dim(1); }
  std::size_t input_size() const { return input_weight.dim(1); }
};

template <Real T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// One LSTM update: c' = f*c + i*g, h' = o*tanh(c').
template <Real T>
LstmState<T> lstm_cell(const Tensor<T>& x, const LstmState<T>& state, const LstmWeights<T>& wts) {
  require_rank(x, 2, "lstm_cell input");
  const std::size_t hid = wts.hidden_size();
  if (wts.input_weight.rank() != 2 || wts.input_weight.dim(0) != 4 * hid)
    throw DimensionError("lstm_cell: input weight rows vs 4*hidden", 4 * hid,
                         wts.input_weight.dim(0));
  if (wts.hidden_weight.dim(0) != 4 * hid)
    throw DimensionError("lstm_cell: hidden weight rows vs 4*hidden", 4 * hid,
                         wts.hidden_weight.dim(0));
  if (x.dim(1) != wts.input_size())
    throw DimensionError("lstm_cell: input width vs weight input width", wts.input_size(), x.dim(1));
  if (state.h.shape() != Shape{x.dim(0), hid})
    throw DimensionError("lstm_cell: hidden state shape " + to_string(state.h.shape()));
  require_same_shape(state.h, state.c, "lstm_cell state");

  const Tensor<T> no_bias(Shape{4 * hid}, T(0));
  const auto gates = add(linear(x, wts.input_weight, wts.bias), linear(state.h, wts.hidden_weight, no_bias));
  const auto i = sigmoid(slice(gates, 1, 0, hid));
  const auto f = sigmoid(slice(gates, 1, hid, hid));
  const auto g = tanh(slice(gates, 1, 2 * hid, hid));
  const auto o = sigmoid(slice(gates, 1, 3 * hid, hid));
  auto c_next = add(mul(f, state.c), mul(i, g));
  auto h_next = mul(o, tanh(c_next));
  return {std::move(h_next), std::move(c_next)};
}

}  // namespace salite
