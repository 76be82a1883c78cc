#include "saco/encoders.hpp"

#include "saco/error.hpp"

namespace saco::encoders {

StyleTable StyleTable::create(ParameterStore& store, const std::string& name, int num_styles, int d,
                              std::mt19937_64& rng) {
  StyleTable t;
  t.table = store.add_normal(name, num_styles, d, 1.0, rng);
  return t;
}

int StyleTable::num_styles(const ParameterStore& store) const {
  return static_cast<int>(store[table].value.rows());
}

Var StyleTable::encode(Graph& g, int style_id) const { return encode_style(g, table, style_id); }

Var encode_style(Graph& g, ParamId table, int style_id) {
  const auto rows = g.params()[table].value.rows();
  if (style_id < 0 || style_id >= rows) {
    throw ValidationError("style id " + std::to_string(style_id) + " outside [0, " +
                          std::to_string(rows) + ")");
  }
  const int idx[] = {style_id};
  return ad::gather_rows(g.param(table), idx);
}

VisualProjection VisualProjection::create(ParameterStore& store, const std::string& name, int d_raw,
                                          int d, std::mt19937_64& rng) {
  if (d_raw < d) throw ValidationError("visual projection expects d_raw >= d");
  return {layers::Mlp::create(store, name, d_raw, d, d, rng)};
}

Var VisualProjection::operator()(Graph& g, Var raw) const {
  const int expected = mlp.fc1.in_features(g.params());
  if (raw.cols() != expected) {
    throw ValidationError("visual features have " + std::to_string(raw.cols()) +
                          " columns, projection expects " + std::to_string(expected));
  }
  return mlp(g, raw);
}

StyleAwareEncoder StyleAwareEncoder::create(ParameterStore& store, const std::string& name,
                                            const EncoderConfig& cfg, std::mt19937_64& rng) {
  StyleAwareEncoder e;
  e.visual_positions = store.add_normal(name + ".visual_positions", cfg.m, cfg.d, 0.1, rng);
  e.style_slot = store.add_normal(name + ".style_slot", 1, cfg.d, 0.1, rng);
  for (int i = 0; i < cfg.layers; ++i) {
    e.blocks.push_back(layers::TransformerBlock::create(
        store, name + ".layer" + std::to_string(i), cfg.d, cfg.heads, cfg.ffn_mult, rng));
  }
  return e;
}

FusedRepresentation StyleAwareEncoder::operator()(Graph& g, Var visual, Var style,
                                                  const EncodeOptions& options) const {
  const Matrix& positions = g.params()[visual_positions].value;
  if (visual.rows() != positions.rows() || visual.cols() != positions.cols()) {
    throw ValidationError("style-aware encoder expects " + std::to_string(positions.rows()) + "x" +
                          std::to_string(positions.cols()) + " visual input");
  }
  if (style.rows() != 1 || style.cols() != positions.cols()) {
    throw ValidationError("style-aware encoder: style feature width mismatch");
  }
  if (!visual.value().allFinite() || !style.value().allFinite()) {
    throw ValidationError("style-aware encoder: non-finite input");
  }
  const auto m = visual.rows();
  Var x = ad::concat_rows({ad::add(visual, g.param(visual_positions)),
                           ad::add(style, g.param(style_slot))});
  const Matrix* mask = options.mask;
  if (mask && (mask->rows() != m + 1 || mask->cols() != m + 1)) {
    throw ValidationError("style-aware encoder: mask must be (m+1)x(m+1)");
  }
  for (const auto& block : blocks) x = block(g, x, mask, options.attention);
  return {ad::slice_rows(x, 0, m), ad::slice_rows(x, m, 1)};
}

Var pool(Var v_s) { return ad::mean_rows(v_s); }

}  // namespace saco::encoders
