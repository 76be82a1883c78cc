#pragma once

#include <random>
#include <span>
#include <vector>

#include "saco/core/vocab.hpp"
#include "saco/layers.hpp"
#include "saco/search.hpp"

namespace saco::generator {

using ad::Graph;
using ad::Matrix;
using ad::ParamId;
using ad::ParameterStore;
using ad::Var;
using core::TokenId;
using core::TokenSeq;

inline constexpr int kMaxCaptionLength = 30;

struct DecoderConfig {
  int d = 32;            // width of V^s / s^v
  int d_h = 64;          // decoder hidden width
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int vocab_size = 8;
  int m = 9;             // visual memory slots
  int max_len = kMaxCaptionLength;
  bool use_style_token = true;  // feed s^v as a memory token
};

struct DecoderState {
  Var hidden;  // N x d_h, one row per caption position
  Var logits;  // N x |V|
};

// Causal transformer decoder. Memory tokens [V^s; s^v] are projected to d_h
// and prepended; they see each other, caption positions see all memory
// tokens and their own prefix.
struct Decoder {
  layers::Linear memory_projection;  // d -> d_h
  ParamId memory_type = -1;          // 2 x d_h: visual slot, style slot
  ParamId token_embedding = -1;      // |V| x d_h
  ParamId position_embedding = -1;   // max_len x d_h
  std::vector<layers::TransformerBlock> blocks;
  layers::LayerNorm final_norm;
  layers::Linear lm_head;            // d_h -> |V|
  DecoderConfig config;

  static Decoder create(ParameterStore& store, const std::string& name, const DecoderConfig& cfg,
                        std::mt19937_64& rng);

  // `prefix` must start with <SOS> and hold at most max_len tokens.
  DecoderState operator()(Graph& g, Var v_s, Var s_v, std::span<const TokenId> prefix) const;
};

// -(1/N) sum log softmax(logits)_i[gold_i] over non-<PAD> positions.
Var caption_loss(Var logits, std::span<const TokenId> gold);

// Mean over steps of MLP_tri(h_i).
struct TripletHead {
  layers::Mlp mlp;

  static TripletHead create(ParameterStore& store, const std::string& name, int d_h, int d,
                            std::mt19937_64& rng);
  Var operator()(Graph& g, Var hidden) const;
};

// Teacher-forcing input for a gold caption: <SOS> followed by all but the
// last gold token.
TokenSeq teacher_prefix(std::span<const TokenId> gold);

// Binds a decoder to fixed memory values for inference.
class BoundDecoder {
 public:
  BoundDecoder(const ParameterStore& store, const Decoder& decoder, Matrix v_s, Matrix s_v);

  Eigen::VectorXd next_log_probs(const TokenSeq& prefix) const;
  search::LogProbFn as_fn() const;

  TokenSeq greedy_decode(int max_len = kMaxCaptionLength) const;
  search::SampledCaption sample_decode(std::mt19937_64& rng, int max_len = kMaxCaptionLength,
                                       double temperature = 1.0) const;
  TokenSeq beam_search(int beam = 3, int max_len = kMaxCaptionLength) const;

 private:
  const ParameterStore* store_;
  const Decoder* decoder_;
  Matrix v_s_;
  Matrix s_v_;
};

}  // namespace saco::generator
