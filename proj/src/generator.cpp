#include "saco/generator.hpp"

#include <cmath>
#include <limits>

#include "saco/error.hpp"

namespace saco::generator {

Decoder Decoder::create(ParameterStore& store, const std::string& name, const DecoderConfig& cfg,
                        std::mt19937_64& rng) {
  if (cfg.vocab_size < 5) throw ValidationError("decoder needs a vocabulary of at least 5 tokens");
  Decoder dec;
  dec.config = cfg;
  dec.memory_projection = layers::Linear::create(store, name + ".memory_projection", cfg.d, cfg.d_h, rng);
  dec.memory_type = store.add_normal(name + ".memory_type", 2, cfg.d_h, 0.1, rng);
  dec.token_embedding = store.add_normal(name + ".token_embedding", cfg.vocab_size, cfg.d_h, 0.1, rng);
  dec.position_embedding = store.add_normal(name + ".position_embedding", cfg.max_len, cfg.d_h, 0.1, rng);
  for (int i = 0; i < cfg.layers; ++i) {
    dec.blocks.push_back(layers::TransformerBlock::create(
        store, name + ".layer" + std::to_string(i), cfg.d_h, cfg.heads, cfg.ffn_mult, rng));
  }
  dec.final_norm = layers::LayerNorm::create(store, name + ".final_norm", cfg.d_h);
  dec.lm_head = layers::Linear::create(store, name + ".lm_head", cfg.d_h, cfg.vocab_size, rng);
  return dec;
}

DecoderState Decoder::operator()(Graph& g, Var v_s, Var s_v, std::span<const TokenId> prefix) const {
  if (prefix.empty()) throw ValidationError("decode: empty prefix");
  if (prefix.front() != core::kSos) throw ValidationError("decode: prefix must start with <SOS>");
  if (static_cast<int>(prefix.size()) > config.max_len) {
    throw ValidationError("decode: prefix length " + std::to_string(prefix.size()) +
                          " exceeds maximum " + std::to_string(config.max_len));
  }
  for (TokenId t : prefix) {
    if (t < 0 || t >= config.vocab_size) throw ValidationError("decode: token id out of range");
  }

  const auto m = v_s.rows();
  const auto n = static_cast<Eigen::Index>(prefix.size());
  const int visual_type[] = {0};
  const int style_type[] = {1};
  Var types = g.param(memory_type);
  Var visual = ad::add_row(memory_projection(g, v_s), ad::gather_rows(types, visual_type));
  std::vector<Var> parts{visual};
  if (config.use_style_token) {
    parts.push_back(ad::add(memory_projection(g, s_v), ad::gather_rows(types, style_type)));
  }
  std::vector<int> ids(prefix.begin(), prefix.end());
  std::vector<int> positions(prefix.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  parts.push_back(ad::add(ad::gather_rows(g.param(token_embedding), ids),
                          ad::gather_rows(g.param(position_embedding), positions)));
  Var x = ad::concat_rows(parts);

  const auto memory = m + (config.use_style_token ? 1 : 0);
  const auto total = memory + n;
  const double blocked = -std::numeric_limits<double>::infinity();
  Matrix mask = Matrix::Zero(total, total);
  mask.topRightCorner(memory, n).setConstant(blocked);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) mask(memory + i, memory + j) = blocked;
  }
  for (const auto& block : blocks) x = block(g, x, &mask);

  Var hidden = final_norm(g, ad::slice_rows(x, memory, n));
  return {hidden, lm_head(g, hidden)};
}

Var caption_loss(Var logits, std::span<const TokenId> gold) {
  if (static_cast<Eigen::Index>(gold.size()) != logits.rows()) {
    throw ValidationError("caption_loss: gold length does not match scored positions");
  }
  std::vector<int> cols(gold.size());
  int scored = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    cols[i] = gold[i] == core::kPad ? -1 : gold[i];
    if (cols[i] >= 0) ++scored;
  }
  if (scored == 0) throw ValidationError("caption_loss: no scored positions");
  Var picked = ad::pick(ad::log_softmax_rows(logits), cols);
  return ad::scale(ad::sum(picked), -1.0 / scored);
}

TripletHead TripletHead::create(ParameterStore& store, const std::string& name, int d_h, int d,
                                std::mt19937_64& rng) {
  return {layers::Mlp::create(store, name, d_h, d, d, rng)};
}

Var TripletHead::operator()(Graph& g, Var hidden) const {
  if (hidden.rows() < 1) throw ValidationError("triplet representation needs at least one step");
  return ad::mean_rows(mlp(g, hidden));
}

TokenSeq teacher_prefix(std::span<const TokenId> gold) {
  TokenSeq prefix{core::kSos};
  if (!gold.empty()) prefix.insert(prefix.end(), gold.begin(), gold.end() - 1);
  return prefix;
}

BoundDecoder::BoundDecoder(const ParameterStore& store, const Decoder& decoder, Matrix v_s, Matrix s_v)
    : store_(&store), decoder_(&decoder), v_s_(std::move(v_s)), s_v_(std::move(s_v)) {}

Eigen::VectorXd BoundDecoder::next_log_probs(const TokenSeq& prefix) const {
  Graph g(*store_, false);
  DecoderState st = (*decoder_)(g, g.constant(v_s_), g.constant(s_v_), prefix);
  const Matrix& logits = st.logits.value();
  Eigen::VectorXd last = logits.row(logits.rows() - 1).transpose();
  const double mx = last.maxCoeff();
  const double lse = mx + std::log((last.array() - mx).exp().sum());
  return last.array() - lse;
}

search::LogProbFn BoundDecoder::as_fn() const {
  return [this](const TokenSeq& prefix) { return next_log_probs(prefix); };
}

TokenSeq BoundDecoder::greedy_decode(int max_len) const {
  return search::greedy(as_fn(), std::min(max_len, decoder_->config.max_len)).tokens;
}

search::SampledCaption BoundDecoder::sample_decode(std::mt19937_64& rng, int max_len,
                                                   double temperature) const {
  return search::sample(as_fn(), std::min(max_len, decoder_->config.max_len), rng, temperature);
}

TokenSeq BoundDecoder::beam_search(int beam, int max_len) const {
  return search::beam(as_fn(), beam, std::min(max_len, decoder_->config.max_len)).tokens;
}

}  // namespace saco::generator
