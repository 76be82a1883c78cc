#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "saco/parallel.hpp"

// Corpus caption metrics with coco-caption semantics. Captions are split with
// the core tokenizer (lowercase, whitespace).
namespace saco::metrics {

using CaptionMap = std::map<std::string, std::string>;
using ReferenceMap = std::map<std::string, std::vector<std::string>>;

struct MetricMap {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
};

// Throws ValidationError unless both maps are non-empty, share the same key
// set and every item has at least one reference.
void validate_corpus(const CaptionMap& candidates, const ReferenceMap& references);

// Corpus BLEU-1..4 (closest reference length, uniform weights).
std::array<double, 4> bleu(const CaptionMap& candidates, const ReferenceMap& references,
                           Exec exec = Exec::kParallel);

// Single-item ROUGE-L F-measure (beta = 1.2, best precision and best recall
// over the references).
double rouge_l_item(const std::string& candidate, const std::vector<std::string>& references);
double rouge_l(const CaptionMap& candidates, const ReferenceMap& references,
               Exec exec = Exec::kParallel);

// CIDEr-D scorer with a document-frequency table frozen at construction.
class CiderD {
 public:
  // One inner vector per image: that image's reference captions.
  explicit CiderD(const std::vector<std::vector<std::string>>& reference_sets, double sigma = 6.0);

  double score(const std::string& candidate, const std::vector<std::string>& references) const;
  std::size_t num_documents() const { return num_documents_; }

 private:
  struct Vector;
  Vector vectorize(const std::string& caption) const;

  std::map<std::string, double> document_frequency_;
  std::size_t num_documents_ = 0;
  double log_num_documents_ = 0.0;
  double sigma_;
};

// Mean per-item CIDEr-D with the df table built from these references.
double cider(const CaptionMap& candidates, const ReferenceMap& references,
             Exec exec = Exec::kParallel);
std::vector<double> cider_per_item(const CaptionMap& candidates, const ReferenceMap& references,
                                   Exec exec = Exec::kParallel);

MetricMap score_all(const CaptionMap& candidates, const ReferenceMap& references,
                    Exec exec = Exec::kParallel);

std::string to_json(const MetricMap& m);

}  // namespace saco::metrics
