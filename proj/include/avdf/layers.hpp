#pragma once

#include <random>
#include <string>
#include <utility>

#include "avdf/autodiff.hpp"
#include "avdf/parameters.hpp"

namespace avdf {

struct LinearParams {
  Parameter* weights = nullptr;  // [out, in]
  Parameter* bias = nullptr;     // [out]

  static LinearParams create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                             std::mt19937_64& rng) {
    LinearParams p;
    p.weights = &store.add(name + ".weight", glorot_uniform(Shape{out, in}, in, out, rng));
    p.bias = &store.add(name + ".bias", Tensor(Shape{out}));
    return p;
  }

  ad::Var operator()(ad::Graph& g, ad::Var x) const {
    return ad::fully_connected(x, g.param(*weights), g.param(*bias));
  }
};

// Gate rows are stacked as input, forget, candidate, output.
struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter* weights = nullptr;  // [4H, D + H]
  Parameter* bias = nullptr;     // [4H]

  static LstmParams create(ParameterStore& store, const std::string& name, std::size_t input, std::size_t hidden,
                           std::mt19937_64& rng) {
    LstmParams p;
    p.input_size = input;
    p.hidden_size = hidden;
    p.weights = &store.add(name + ".weight", glorot_uniform(Shape{4 * hidden, input + hidden}, input + hidden,
                                                            4 * hidden, rng));
    p.bias = &store.add(name + ".bias", Tensor(Shape{4 * hidden}));
    return p;
  }
};

struct LstmState {
  ad::Var hidden;
  ad::Var cell;
};

// One step of the standard LSTM:
//   i, f, o = sigmoid(.), g = tanh(.), c_t = f*c + i*g, h_t = o*tanh(c_t).
inline LstmState lstm_cell_step(ad::Graph& g, ad::Var x, ad::Var h_prev, ad::Var c_prev, const LstmParams& p) {
  const std::size_t H = p.hidden_size;
  if (x.value().size() != p.input_size || h_prev.value().size() != H || c_prev.value().size() != H) {
    throw ShapeError("lstm_cell_step: input " + shape_string(x.shape()) + ", hidden " + shape_string(h_prev.shape()) +
                     ", cell " + shape_string(c_prev.shape()) + " do not match input size " +
                     std::to_string(p.input_size) + " and hidden size " + std::to_string(H));
  }
  ad::Var gates = ad::fully_connected(ad::concat(x, h_prev), g.param(*p.weights), g.param(*p.bias));
  ad::Var in = ad::sigmoid(ad::slice(gates, 0, H));
  ad::Var forget = ad::sigmoid(ad::slice(gates, H, H));
  ad::Var cand = ad::tanh(ad::slice(gates, 2 * H, H));
  ad::Var out = ad::sigmoid(ad::slice(gates, 3 * H, H));
  ad::Var c = ad::add(ad::mul(forget, c_prev), ad::mul(in, cand));
  ad::Var h = ad::mul(out, ad::tanh(c));
  return {h, c};
}

}  // namespace avdf
