#include "saco/layers.hpp"

#include <cmath>

#include "saco/error.hpp"

namespace saco::layers {

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out,
                      std::mt19937_64& rng) {
  Linear l;
  const double std = std::sqrt(2.0 / static_cast<double>(in + out));
  l.weight = store.add_normal(name + ".weight", in, out, std, rng);
  l.bias = store.add_constant(name + ".bias", 1, out, 0.0);
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  return ad::add_row(ad::matmul(x, g.param(weight)), g.param(bias));
}

int Linear::in_features(const ParameterStore& store) const {
  return static_cast<int>(store[weight].value.rows());
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gain = store.add_constant(name + ".gain", 1, dim, 1.0);
  ln.bias = store.add_constant(name + ".bias", 1, dim, 0.0);
  return ln;
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return ad::layer_norm(x, g.param(gain), g.param(bias));
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, int in, int hidden, int out,
                std::mt19937_64& rng) {
  Mlp m;
  m.fc1 = Linear::create(store, name + ".fc1", in, hidden, rng);
  m.fc2 = Linear::create(store, name + ".fc2", hidden, out, rng);
  return m;
}

Var Mlp::operator()(Graph& g, Var x) const {
  Var h = fc1(g, x);
  if (!linear) h = ad::gelu(h);
  return fc2(g, h);
}

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& name, int dim,
                                          int heads, int ffn_mult, std::mt19937_64& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ValidationError(name + ": width " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
  }
  TransformerBlock b;
  b.heads = heads;
  b.ln_attn = LayerNorm::create(store, name + ".ln_attn", dim);
  b.query = Linear::create(store, name + ".attn.query", dim, dim, rng);
  b.key = Linear::create(store, name + ".attn.key", dim, dim, rng);
  b.value = Linear::create(store, name + ".attn.value", dim, dim, rng);
  b.output = Linear::create(store, name + ".attn.output", dim, dim, rng);
  b.ln_ffn = LayerNorm::create(store, name + ".ln_ffn", dim);
  b.ffn = Mlp::create(store, name + ".ffn", dim, dim * ffn_mult, dim, rng);
  return b;
}

Var TransformerBlock::operator()(Graph& g, Var x, const Matrix* mask,
                                 std::vector<Matrix>* attention_out) const {
  const auto dim = x.cols();
  const auto head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var h = ln_attn(g, x);
  Var q = query(g, h);
  Var k = key(g, h);
  Var v = value(g, h);

  std::vector<Var> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    const auto start = static_cast<Eigen::Index>(i) * head_dim;
    Var scores = ad::scale(ad::matmul_nt(ad::slice_cols(q, start, head_dim),
                                         ad::slice_cols(k, start, head_dim)),
                           inv_sqrt);
    Var probs = ad::softmax_rows(scores, mask);
    if (attention_out) attention_out->push_back(probs.value());
    head_out.push_back(ad::matmul(probs, ad::slice_cols(v, start, head_dim)));
  }
  Var attended = heads == 1 ? head_out.front() : ad::concat_cols(head_out);
  x = ad::add(x, output(g, attended));
  return ad::add(x, ffn(g, ln_ffn(g, x)));
}

}  // namespace saco::layers
