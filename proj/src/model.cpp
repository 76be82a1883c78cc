#include "saco/model.hpp"

#include <random>

#include "saco/error.hpp"

namespace saco {

void ModelConfig::validate() const {
  if (d_raw < d) throw ValidationError("model: d_raw must be >= d");
  if (d < 1 || d_h < 1 || m < 1 || num_styles < 1) throw ValidationError("model: dimensions must be >= 1");
  if (vocab_size < 5) throw ValidationError("model: vocab_size must be >= 5");
  if (enc_layers < 1 || dec_layers < 1) throw ValidationError("model: layer counts must be >= 1");
  if (enc_heads < 1 || d % enc_heads != 0) throw ValidationError("model: d must be divisible by enc_heads");
  if (dec_heads < 1 || d_h % dec_heads != 0) throw ValidationError("model: d_h must be divisible by dec_heads");
  if (ffn_mult < 1) throw ValidationError("model: ffn_mult must be >= 1");
  if (max_len < 2 || max_len > generator::kMaxCaptionLength) {
    throw ValidationError("model: max_len must lie in [2, 30]");
  }
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["d_raw"] = d_raw;
  j["d"] = d;
  j["d_h"] = d_h;
  j["m"] = m;
  j["num_styles"] = num_styles;
  j["vocab_size"] = vocab_size;
  j["enc_layers"] = enc_layers;
  j["enc_heads"] = enc_heads;
  j["dec_layers"] = dec_layers;
  j["dec_heads"] = dec_heads;
  j["ffn_mult"] = ffn_mult;
  j["max_len"] = max_len;
  j["decoder_uses_style_token"] = decoder_uses_style_token;
  j["seed"] = seed;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_raw = j.value("d_raw", c.d_raw);
    c.d = j.value("d", c.d);
    c.d_h = j.value("d_h", c.d_h);
    c.m = j.value("m", c.m);
    c.num_styles = j.value("num_styles", c.num_styles);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.enc_heads = j.value("enc_heads", c.enc_heads);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.dec_heads = j.value("dec_heads", c.dec_heads);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.max_len = j.value("max_len", c.max_len);
    c.decoder_uses_style_token = j.value("decoder_uses_style_token", c.decoder_uses_style_token);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  encoders::EncoderConfig enc;
  enc.d_raw = config_.d_raw;
  enc.d = config_.d;
  enc.m = config_.m;
  enc.num_styles = config_.num_styles;
  enc.layers = config_.enc_layers;
  enc.heads = config_.enc_heads;
  enc.ffn_mult = config_.ffn_mult;

  generator::DecoderConfig dec;
  dec.d = config_.d;
  dec.d_h = config_.d_h;
  dec.layers = config_.dec_layers;
  dec.heads = config_.dec_heads;
  dec.ffn_mult = config_.ffn_mult;
  dec.vocab_size = config_.vocab_size;
  dec.m = config_.m;
  dec.max_len = config_.max_len;
  dec.use_style_token = config_.decoder_uses_style_token;

  style_table = encoders::StyleTable::create(params_, "style_table", config_.num_styles, config_.d, rng);
  projection = encoders::VisualProjection::create(params_, "visual_projection", config_.d_raw, config_.d, rng);
  encoder = encoders::StyleAwareEncoder::create(params_, "encoder", enc, rng);
  decoder = generator::Decoder::create(params_, "decoder", dec, rng);
  triplet_head = generator::TripletHead::create(params_, "triplet_head", config_.d_h, config_.d, rng);
}

encoders::FusedRepresentation Model::encode(Graph& g, const Matrix& raw, int style_id,
                                            const encoders::EncodeOptions& options) const {
  Var visual = projection(g, g.constant(raw));
  Var style = style_table.encode(g, style_id);
  return encoder(g, visual, style, options);
}

Model::TripletPass Model::run_decoder(Graph& g, const encoders::FusedRepresentation& fused,
                                      const core::TokenSeq& caption) const {
  if (caption.empty()) throw ValidationError("run_decoder: empty caption");
  TripletPass pass;
  pass.fused = fused;
  pass.state = decoder(g, fused.v_s, fused.s_v, generator::teacher_prefix(caption));
  pass.h = triplet_head(g, pass.state.hidden);
  pass.caption_loss = generator::caption_loss(pass.state.logits, caption);
  return pass;
}

Model::TripletPass Model::run_triplet(Graph& g, const Matrix& raw, int style_id,
                                      const core::TokenSeq& caption) const {
  return run_decoder(g, encode(g, raw, style_id), caption);
}

generator::BoundDecoder Model::bind(const Matrix& raw, int style_id) const {
  Graph g(params_, false);
  auto fused = encode(g, raw, style_id);
  return generator::BoundDecoder(params_, decoder, fused.v_s.value(), fused.s_v.value());
}

Eigen::VectorXd Model::pooled_visual(const Matrix& raw, int style_id) const {
  Graph g(params_, false);
  auto fused = encode(g, raw, style_id);
  return encoders::pool(fused.v_s).value().row(0).transpose();
}

Eigen::VectorXd Model::triplet_vector(const Matrix& raw, int style_id, const core::TokenSeq& caption) const {
  Graph g(params_, false);
  auto pass = run_triplet(g, raw, style_id, caption);
  return pass.h.value().row(0).transpose();
}

}  // namespace saco
