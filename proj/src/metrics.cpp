#include "saco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "saco/core/vocab.hpp"
#include "saco/error.hpp"

namespace saco::metrics {

namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::array<std::map<std::string, int>, kMaxOrder>;

NgramCounts count_ngrams(const std::vector<std::string>& words) {
  NgramCounts counts;
  for (int k = 1; k <= kMaxOrder; ++k) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= words.size(); ++i) {
      std::string key = words[i];
      for (int j = 1; j < k; ++j) {
        key.push_back(' ');
        key += words[i + static_cast<std::size_t>(j)];
      }
      ++counts[static_cast<std::size_t>(k - 1)][key];
    }
  }
  return counts;
}

struct BleuStats {
  double test_len = 0.0;
  double ref_len = 0.0;
  std::array<double, kMaxOrder> guess{};
  std::array<double, kMaxOrder> correct{};
};

BleuStats bleu_stats(const std::string& candidate, const std::vector<std::string>& references) {
  const auto words = core::split_words(candidate);
  const auto counts = count_ngrams(words);
  NgramCounts max_ref;
  const auto test_len = static_cast<long>(words.size());
  long closest = -1;
  for (const auto& ref : references) {
    const auto ref_words = core::split_words(ref);
    const auto len = static_cast<long>(ref_words.size());
    if (closest < 0 || std::abs(len - test_len) < std::abs(closest - test_len) ||
        (std::abs(len - test_len) == std::abs(closest - test_len) && len < closest)) {
      closest = len;
    }
    const auto ref_counts = count_ngrams(ref_words);
    for (int k = 0; k < kMaxOrder; ++k) {
      for (const auto& [gram, c] : ref_counts[static_cast<std::size_t>(k)]) {
        int& slot = max_ref[static_cast<std::size_t>(k)][gram];
        slot = std::max(slot, c);
      }
    }
  }
  BleuStats s;
  s.test_len = static_cast<double>(test_len);
  s.ref_len = static_cast<double>(closest);
  for (int k = 0; k < kMaxOrder; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    s.guess[ku] = static_cast<double>(std::max(0L, test_len - k));
    for (const auto& [gram, c] : counts[ku]) {
      auto it = max_ref[ku].find(gram);
      if (it != max_ref[ku].end()) s.correct[ku] += std::min(c, it->second);
    }
  }
  return s;
}

template <typename Fn>
std::vector<double> per_item(const CaptionMap& candidates, const ReferenceMap& references, Exec exec,
                             Fn&& fn) {
  std::vector<const std::string*> keys;
  for (const auto& [id, cand] : candidates) keys.push_back(&id);
  std::vector<double> out(keys.size());
  for_each_index(keys.size(), exec, [&](std::size_t i) {
    out[i] = fn(candidates.at(*keys[i]), references.at(*keys[i]));
  });
  return out;
}

double mean_of(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

}  // namespace

void validate_corpus(const CaptionMap& candidates, const ReferenceMap& references) {
  if (candidates.empty()) throw ValidationError("metrics: empty corpus");
  if (candidates.size() != references.size()) {
    throw ValidationError("metrics: candidate and reference id sets differ");
  }
  for (const auto& [id, cand] : candidates) {
    auto it = references.find(id);
    if (it == references.end()) throw ValidationError("metrics: no references for item " + id);
    if (it->second.empty()) throw ValidationError("metrics: item " + id + " has no references");
  }
}

std::array<double, 4> bleu(const CaptionMap& candidates, const ReferenceMap& references, Exec exec) {
  validate_corpus(candidates, references);
  std::vector<const std::string*> keys;
  for (const auto& [id, cand] : candidates) keys.push_back(&id);
  std::vector<BleuStats> stats(keys.size());
  for_each_index(keys.size(), exec, [&](std::size_t i) {
    stats[i] = bleu_stats(candidates.at(*keys[i]), references.at(*keys[i]));
  });

  BleuStats total;
  for (const auto& s : stats) {
    total.test_len += s.test_len;
    total.ref_len += s.ref_len;
    for (int k = 0; k < kMaxOrder; ++k) {
      total.guess[static_cast<std::size_t>(k)] += s.guess[static_cast<std::size_t>(k)];
      total.correct[static_cast<std::size_t>(k)] += s.correct[static_cast<std::size_t>(k)];
    }
  }
  // Same guard constants as the coco-caption scorer.
  constexpr double small = 1e-9;
  constexpr double tiny = 1e-15;
  std::array<double, 4> out{};
  double product = 1.0;
  for (int k = 0; k < kMaxOrder; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    product *= (total.correct[ku] + tiny) / (total.guess[ku] + small);
    out[ku] = std::pow(product, 1.0 / (k + 1));
  }
  const double ratio = (total.test_len + tiny) / (total.ref_len + small);
  if (ratio < 1.0) {
    for (auto& b : out) b *= std::exp(1.0 - 1.0 / ratio);
  }
  return out;
}

double rouge_l_item(const std::string& candidate, const std::vector<std::string>& references) {
  if (references.empty()) throw ValidationError("rouge_l: no references");
  const auto cand = core::split_words(candidate);
  if (cand.empty()) return 0.0;
  constexpr double beta = 1.2;
  double best_prec = 0.0;
  double best_rec = 0.0;
  std::vector<int> prev;
  std::vector<int> cur;
  for (const auto& ref_text : references) {
    const auto ref = core::split_words(ref_text);
    if (ref.empty()) continue;
    prev.assign(cand.size() + 1, 0);
    cur.assign(cand.size() + 1, 0);
    for (const auto& r : ref) {
      for (std::size_t j = 1; j <= cand.size(); ++j) {
        cur[j] = r == cand[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
      }
      std::swap(prev, cur);
    }
    const double lcs = prev[cand.size()];
    best_prec = std::max(best_prec, lcs / static_cast<double>(cand.size()));
    best_rec = std::max(best_rec, lcs / static_cast<double>(ref.size()));
  }
  if (best_prec == 0.0 || best_rec == 0.0) return 0.0;
  return (1.0 + beta * beta) * best_prec * best_rec / (best_rec + beta * beta * best_prec);
}

double rouge_l(const CaptionMap& candidates, const ReferenceMap& references, Exec exec) {
  validate_corpus(candidates, references);
  return mean_of(per_item(candidates, references, exec, rouge_l_item));
}

struct CiderD::Vector {
  std::array<std::map<std::string, double>, kMaxOrder> weights;
  std::array<double, kMaxOrder> norm{};
  double length = 0.0;
};

CiderD::CiderD(const std::vector<std::vector<std::string>>& reference_sets, double sigma)
    : num_documents_(reference_sets.size()), sigma_(sigma) {
  if (reference_sets.empty()) throw ValidationError("CiderD: no reference sets");
  for (const auto& refs : reference_sets) {
    std::set<std::string> seen;
    for (const auto& ref : refs) {
      const auto counts = count_ngrams(core::split_words(ref));
      for (const auto& order : counts) {
        for (const auto& [gram, c] : order) seen.insert(gram);
      }
    }
    for (const auto& gram : seen) document_frequency_[gram] += 1.0;
  }
  log_num_documents_ = std::log(static_cast<double>(num_documents_));
}

CiderD::Vector CiderD::vectorize(const std::string& caption) const {
  const auto counts = count_ngrams(core::split_words(caption));
  Vector v;
  for (int k = 0; k < kMaxOrder; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    for (const auto& [gram, tf] : counts[ku]) {
      auto it = document_frequency_.find(gram);
      const double df = std::log(std::max(1.0, it == document_frequency_.end() ? 0.0 : it->second));
      const double w = static_cast<double>(tf) * (log_num_documents_ - df);
      v.weights[ku][gram] = w;
      v.norm[ku] += w * w;
      // coco-caption measures length in bigrams.
      if (k == 1) v.length += tf;
    }
    v.norm[ku] = std::sqrt(v.norm[ku]);
  }
  return v;
}

double CiderD::score(const std::string& candidate, const std::vector<std::string>& references) const {
  if (references.empty()) throw ValidationError("CiderD: no references");
  const Vector hyp = vectorize(candidate);
  double total = 0.0;
  for (const auto& ref_text : references) {
    const Vector ref = vectorize(ref_text);
    const double delta = hyp.length - ref.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma_ * sigma_));
    double per_order = 0.0;
    for (std::size_t k = 0; k < kMaxOrder; ++k) {
      double val = 0.0;
      for (const auto& [gram, w] : hyp.weights[k]) {
        auto it = ref.weights[k].find(gram);
        if (it == ref.weights[k].end()) continue;
        val += std::min(w, it->second) * it->second;
      }
      if (hyp.norm[k] != 0.0 && ref.norm[k] != 0.0) val /= hyp.norm[k] * ref.norm[k];
      per_order += val * penalty;
    }
    total += per_order / kMaxOrder;
  }
  return total / static_cast<double>(references.size()) * 10.0;
}

std::vector<double> cider_per_item(const CaptionMap& candidates, const ReferenceMap& references,
                                   Exec exec) {
  validate_corpus(candidates, references);
  std::vector<std::vector<std::string>> sets;
  for (const auto& [id, refs] : references) sets.push_back(refs);
  const CiderD scorer(sets);
  return per_item(candidates, references, exec,
                  [&](const std::string& c, const std::vector<std::string>& r) { return scorer.score(c, r); });
}

double cider(const CaptionMap& candidates, const ReferenceMap& references, Exec exec) {
  return mean_of(cider_per_item(candidates, references, exec));
}

MetricMap score_all(const CaptionMap& candidates, const ReferenceMap& references, Exec exec) {
  MetricMap m;
  const auto b = bleu(candidates, references, exec);
  m.bleu1 = b[0];
  m.bleu2 = b[1];
  m.bleu3 = b[2];
  m.bleu4 = b[3];
  m.rouge_l = rouge_l(candidates, references, exec);
  m.cider = cider(candidates, references, exec);
  return m;
}

std::string to_json(const MetricMap& m) {
  nlohmann::ordered_json j;
  j["bleu1"] = m.bleu1;
  j["bleu2"] = m.bleu2;
  j["bleu3"] = m.bleu3;
  j["bleu4"] = m.bleu4;
  j["rougeL"] = m.rouge_l;
  j["cider"] = m.cider;
  return j.dump(2) + "\n";
}

}  // namespace saco::metrics
