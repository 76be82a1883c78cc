#pragma once

#include <random>
#include <vector>

#include "saco/layers.hpp"

namespace saco::encoders {

using ad::Graph;
using ad::Matrix;
using ad::ParamId;
using ad::ParameterStore;
using ad::Var;

struct EncoderConfig {
  int d_raw = 64;       // width of ingested visual features
  int d = 32;           // shared style / visual width
  int m = 9;            // visual slots per image
  int num_styles = 3;
  int layers = 3;
  int heads = 4;
  int ffn_mult = 4;
};

// Linear layer over a one-hot style vector, stored as its |styles| x d
// weight. Encoding is row selection.
struct StyleTable {
  ParamId table = -1;

  static StyleTable create(ParameterStore& store, const std::string& name, int num_styles, int d,
                           std::mt19937_64& rng);
  int num_styles(const ParameterStore& store) const;
  Var encode(Graph& g, int style_id) const;
};

Var encode_style(Graph& g, ParamId table, int style_id);

// Position-wise MLP reducing d_raw to d.
struct VisualProjection {
  layers::Mlp mlp;

  static VisualProjection create(ParameterStore& store, const std::string& name, int d_raw, int d,
                                 std::mt19937_64& rng);
  Var operator()(Graph& g, Var raw) const;
};

struct FusedRepresentation {
  Var v_s;  // m x d style-aware visual features
  Var s_v;  // 1 x d vision-aware style feature
};

struct EncodeOptions {
  // Replaces the all-visible (m+1)x(m+1) attention mask when set.
  const Matrix* mask = nullptr;
  // Receives per-layer, per-head attention probabilities.
  std::vector<Matrix>* attention = nullptr;
};

// Self-attention over [V; s] with learned slot embeddings for the m visual
// positions (row-first order) and one for the style slot.
struct StyleAwareEncoder {
  ParamId visual_positions = -1;  // m x d
  ParamId style_slot = -1;        // 1 x d
  std::vector<layers::TransformerBlock> blocks;

  static StyleAwareEncoder create(ParameterStore& store, const std::string& name,
                                  const EncoderConfig& cfg, std::mt19937_64& rng);

  FusedRepresentation operator()(Graph& g, Var visual, Var style,
                                 const EncodeOptions& options = {}) const;
};

// Mean over rows.
Var pool(Var v_s);

}  // namespace saco::encoders
