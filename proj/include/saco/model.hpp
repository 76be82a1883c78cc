#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "saco/encoders.hpp"
#include "saco/generator.hpp"

namespace saco {

using ad::Graph;
using ad::Matrix;
using ad::Var;

struct ModelConfig {
  int d_raw = 64;
  int d = 32;
  int d_h = 64;
  int m = 9;
  int num_styles = 3;
  int vocab_size = 8;
  int enc_layers = 3;
  int enc_heads = 4;
  int dec_layers = 2;
  int dec_heads = 4;
  int ffn_mult = 4;
  int max_len = generator::kMaxCaptionLength;
  bool decoder_uses_style_token = true;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Every trainable block of the captioner, plus the parameter store that owns
// their weights. Parameters are created in a fixed order from `seed`.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  encoders::FusedRepresentation encode(Graph& g, const Matrix& raw, int style_id,
                                       const encoders::EncodeOptions& options = {}) const;

  struct TripletPass {
    encoders::FusedRepresentation fused;
    generator::DecoderState state;
    Var h;             // 1 x d triplet representation
    Var caption_loss;  // 1 x 1
  };

  // Encodes (raw, style) and teacher-forces `caption` (which should end with
  // <EOS>) through the decoder.
  TripletPass run_triplet(Graph& g, const Matrix& raw, int style_id, const core::TokenSeq& caption) const;

  // Same, reusing an already encoded representation.
  TripletPass run_decoder(Graph& g, const encoders::FusedRepresentation& fused,
                          const core::TokenSeq& caption) const;

  generator::BoundDecoder bind(const Matrix& raw, int style_id) const;

  Eigen::VectorXd pooled_visual(const Matrix& raw, int style_id) const;
  Eigen::VectorXd triplet_vector(const Matrix& raw, int style_id, const core::TokenSeq& caption) const;

  encoders::StyleTable style_table;
  encoders::VisualProjection projection;
  encoders::StyleAwareEncoder encoder;
  generator::Decoder decoder;
  generator::TripletHead triplet_head;

 private:
  ModelConfig config_;
  ad::ParameterStore params_;
};

// Binary archive of every parameter keyed by name ("SACOCKPT" v1, little
// endian: count, then name, rows, cols and float64 data per entry) plus a
// JSON sidecar at `path + ".json"` holding the model config.
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);
// Overwrites the values of `model` from an archive; names and shapes must match.
void load_weights(Model& model, const std::string& path);

// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);

}  // namespace saco
