#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "saco/core/dataset.hpp"

namespace saco::data {

using ad::Matrix;

struct CaptionRecord {
  int style = 0;
  std::string text;
};

struct ImageRecord {
  std::string image_id;
  std::string feature_file;  // relative to the manifest directory
  int m = 0;
  int d_raw = 0;
  std::vector<std::string> objects;
  std::vector<CaptionRecord> captions;
};

struct Manifest {
  std::vector<std::string> styles;
  std::vector<ImageRecord> items;
  std::filesystem::path base_dir;

  // Reads the item's blob: m * d_raw little-endian float32, row-major.
  Matrix load_features(std::size_t index) const;
};

// Parses and validates a manifest. Blob sizes are checked eagerly; contents
// are read on demand via Manifest::load_features.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

Matrix read_blob(const std::filesystem::path& path, int m, int d_raw);
void write_blob(const std::filesystem::path& path, const Matrix& features);

// Every caption text of the manifest, in item order.
std::vector<std::string> caption_corpus(const Manifest& manifest);

// Flattens the manifest into triplets. Captions longer than max_tokens are
// truncated before <EOS> is appended.
core::Dataset build_dataset(const Manifest& manifest, const core::Vocabulary& vocab,
                            int max_tokens = 29);

struct SyntheticSpec {
  int n_items = 32;
  int n_styles = 3;
  int m = 9;
  int d_raw = 64;
  int vocab_size = 60;
  std::uint64_t seed = 7;
  double noise = 0.05;
};

inline constexpr int kObjectInventory = 20;

// Writes manifest.json plus one blob per image under `out_dir` and returns
// the manifest. Each image holds 2-5 objects; features are the sum of the
// objects' signature vectors placed at fixed slots plus Gaussian noise.
// Captions come from a per-style template grammar in which each style
// decorates its own subset of objects with style-specific modifiers.
Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace saco::data
