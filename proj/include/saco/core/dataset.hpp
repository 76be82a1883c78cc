#pragma once

#include <memory>
#include <string>
#include <vector>

#include "saco/autograd/parameters.hpp"
#include "saco/core/vocab.hpp"

namespace saco::core {

// One (image, style, caption) triplet. Features are shared between the
// triplets of the same image.
struct DatasetItem {
  std::string image_id;
  int image_index = 0;
  std::shared_ptr<const ad::Matrix> features;  // m x d_raw
  std::vector<std::string> objects;            // sorted, unique
  int style_id = 0;
  TokenSeq caption;                            // ends with <EOS>
  std::string caption_text;
};

struct Dataset {
  std::vector<std::string> styles;
  std::vector<DatasetItem> items;
  int num_images = 0;
  std::shared_ptr<const Vocabulary> vocab;

  std::string text(const TokenSeq& ids) const { return detokenize(ids, *vocab); }

  std::size_t size() const { return items.size(); }
  int num_styles() const { return static_cast<int>(styles.size()); }
  int m() const;
  int d_raw() const;

  // Captions of the same image written in the same style.
  std::vector<std::string> references(int image_index, int style_id) const;
  // Index of the first item with this image id, or -1.
  int find_image(const std::string& image_id) const;
};

}  // namespace saco::core
