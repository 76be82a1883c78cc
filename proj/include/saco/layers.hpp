#pragma once

#include <random>
#include <string>
#include <vector>

#include "saco/autograd/ops.hpp"

namespace saco::layers {

using ad::Graph;
using ad::Matrix;
using ad::ParamId;
using ad::ParameterStore;
using ad::Var;

// y = x W + b with W: in x out.
struct Linear {
  ParamId weight = -1;
  ParamId bias = -1;

  static Linear create(ParameterStore& store, const std::string& name, int in, int out,
                       std::mt19937_64& rng);
  Var operator()(Graph& g, Var x) const;
  int in_features(const ParameterStore& store) const;
};

struct LayerNorm {
  ParamId gain = -1;
  ParamId bias = -1;

  static LayerNorm create(ParameterStore& store, const std::string& name, int dim);
  Var operator()(Graph& g, Var x) const;
};

// Two affine maps around a GELU, applied row by row. `linear` drops the
// nonlinearity (used by tests that need an exactly linear head).
struct Mlp {
  Linear fc1;
  Linear fc2;
  bool linear = false;

  static Mlp create(ParameterStore& store, const std::string& name, int in, int hidden, int out,
                    std::mt19937_64& rng);
  Var operator()(Graph& g, Var x) const;
};

// Pre-LN transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  LayerNorm ln_attn;
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  LayerNorm ln_ffn;
  Mlp ffn;
  int heads = 1;

  static TransformerBlock create(ParameterStore& store, const std::string& name, int dim,
                                 int heads, int ffn_mult, std::mt19937_64& rng);

  // `mask` is additive over the (rows x rows) score matrix. When
  // `attention_out` is non-null the per-head probability matrices are
  // appended to it.
  Var operator()(Graph& g, Var x, const Matrix* mask,
                 std::vector<Matrix>* attention_out = nullptr) const;
};

}  // namespace saco::layers
