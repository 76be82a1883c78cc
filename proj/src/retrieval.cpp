#include "saco/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "saco/contrastive.hpp"
#include "saco/error.hpp"
#include "saco/search.hpp"

namespace saco::retrieval {

void SamplerConfig::validate() const {
  const auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(theta) || !open_unit(phi) || !open_unit(omega)) {
    throw ValidationError("sampler: theta, phi and omega must lie in (0, 1)");
  }
  if (top_k_pos < 1) throw ValidationError("sampler: top_k_pos must be >= 1");
  if (num_negatives < 1) throw ValidationError("sampler: num_negatives must be >= 1");
}

double object_overlap_score(const std::vector<std::string>& anchor,
                            const std::vector<std::string>& candidate) {
  if (anchor.empty()) throw ValidationError("object_overlap_score: anchor has no objects");
  std::vector<std::string> shared;
  std::set_intersection(anchor.begin(), anchor.end(), candidate.begin(), candidate.end(),
                        std::back_inserter(shared));
  return static_cast<double>(shared.size()) / static_cast<double>(anchor.size());
}

double roi_score(const Eigen::MatrixXd& v_s_anchor, const Eigen::MatrixXd& v_s_candidate) {
  if (v_s_anchor.rows() < 1 || v_s_candidate.rows() < 1) throw ValidationError("roi_score: empty input");
  return roi_score_pooled(v_s_anchor.colwise().mean().transpose(),
                          v_s_candidate.colwise().mean().transpose());
}

double roi_score_pooled(const Eigen::VectorXd& pooled_anchor, const Eigen::VectorXd& pooled_candidate) {
  return contrastive::cosine_sim(pooled_anchor, pooled_candidate);
}

double triplet_score(const Eigen::VectorXd& h_anchor, const Eigen::VectorXd& h_candidate) {
  return contrastive::cosine_sim(h_anchor, h_candidate);
}

double combined_score(double p_obj, double p_roi, double p_tri, double theta, double phi, int epoch) {
  const double w = std::pow(theta, epoch);
  return w * p_obj + (1.0 - w) * (phi * p_roi + (1.0 - phi) * p_tri);
}

double negative_threshold(double p_max, double omega, int epoch) {
  return std::max(0.1, p_max - std::pow(omega, epoch));
}

std::vector<RankedCandidate> rank_candidates(int anchor, const core::Dataset& dataset,
                                             const RepresentationCache& cache,
                                             const SamplerConfig& config, int epoch, Exec exec) {
  if (anchor < 0 || static_cast<std::size_t>(anchor) >= dataset.size()) {
    throw ValidationError("rank_candidates: anchor index out of range");
  }
  if (epoch < 0) throw ValidationError("rank_candidates: epoch must be >= 0");
  const bool learned = !cache.empty();
  if (!learned && epoch > 0) {
    throw ValidationError("rank_candidates: representation cache required after epoch 0");
  }
  const auto& a = dataset.items[static_cast<std::size_t>(anchor)];
  std::vector<int> pool;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.items[i].image_index != a.image_index) pool.push_back(static_cast<int>(i));
  }
  const auto needed = static_cast<std::size_t>(config.top_k_pos + config.num_negatives);
  if (pool.size() < needed) {
    throw ValidationError("rank_candidates: pool of " + std::to_string(pool.size()) +
                          " candidates is smaller than top_k_pos + num_negatives = " +
                          std::to_string(needed));
  }

  std::vector<RankedCandidate> ranked(pool.size());
  for_each_index(pool.size(), exec, [&](std::size_t k) {
    const int c = pool[k];
    const auto& cand = dataset.items[static_cast<std::size_t>(c)];
    RetrievalScores s;
    s.p_obj = object_overlap_score(a.objects, cand.objects);
    if (learned) {
      // Both images are read under the anchor's style.
      s.p_roi = roi_score_pooled(cache.pooled_for(a.image_index, a.style_id),
                                 cache.pooled_for(cand.image_index, a.style_id));
      s.p_tri = triplet_score(cache.triplet[static_cast<std::size_t>(anchor)],
                              cache.triplet[static_cast<std::size_t>(c)]);
    }
    s.p = combined_score(s.p_obj, s.p_roi, s.p_tri, config.theta, config.phi, epoch);
    ranked[k] = {c, s};
  });
  std::sort(ranked.begin(), ranked.end(), [&](const RankedCandidate& x, const RankedCandidate& y) {
    if (x.scores.p != y.scores.p) return x.scores.p > y.scores.p;
    const auto& ix = dataset.items[static_cast<std::size_t>(x.item)].image_id;
    const auto& iy = dataset.items[static_cast<std::size_t>(y.item)].image_id;
    if (ix != iy) return ix < iy;
    return x.item < y.item;
  });
  return ranked;
}

std::vector<std::vector<RankedCandidate>> rank_all(const core::Dataset& dataset,
                                                   const RepresentationCache& cache,
                                                   const SamplerConfig& config, int epoch, Exec exec) {
  std::vector<std::vector<RankedCandidate>> out(dataset.size());
  for_each_index(dataset.size(), exec, [&](std::size_t i) {
    out[i] = rank_candidates(static_cast<int>(i), dataset, cache, config, epoch, Exec::kSerial);
  });
  return out;
}

std::size_t sample_positive(const std::vector<RankedCandidate>& ranked, int top_k, std::mt19937_64& rng) {
  if (ranked.empty()) throw ValidationError("sample_positive: no candidates");
  if (top_k < 1) throw ValidationError("sample_positive: top_k must be >= 1");
  auto support = static_cast<std::size_t>(top_k);
  if (ranked.size() < support) {
    spdlog::warn("sample_positive: only {} candidates, drawing uniformly over all", ranked.size());
    support = ranked.size();
  }
  return std::min(support - 1, static_cast<std::size_t>(search::uniform01(rng) * static_cast<double>(support)));
}

NegativeDraw sample_negatives(const std::vector<RankedCandidate>& ranked, int count, double omega,
                              int epoch, std::mt19937_64& rng, std::size_t exclude) {
  if (count < 1) throw ValidationError("sample_negatives: count must be >= 1");
  NegativeDraw draw;
  if (ranked.empty()) return draw;
  double p_max = ranked.front().scores.p;
  for (const auto& r : ranked) p_max = std::max(p_max, r.scores.p);
  draw.threshold = negative_threshold(p_max, omega, epoch);

  std::vector<std::size_t> admissible;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i != exclude && ranked[i].scores.p < draw.threshold) admissible.push_back(i);
  }
  const auto want = static_cast<std::size_t>(count);
  // Partial Fisher-Yates: the first `take` slots become a uniform subset.
  const std::size_t take = std::min(want, admissible.size());
  for (std::size_t j = 0; j < take; ++j) {
    const std::size_t remaining = admissible.size() - j;
    const std::size_t pick = j + std::min(remaining - 1, static_cast<std::size_t>(
                                                             search::uniform01(rng) * static_cast<double>(remaining)));
    std::swap(admissible[j], admissible[pick]);
    draw.positions.push_back(admissible[j]);
  }
  if (draw.positions.size() < want) {
    for (std::size_t i = ranked.size(); i-- > 0 && draw.positions.size() < want;) {
      if (i == exclude) continue;
      if (std::find(draw.positions.begin(), draw.positions.end(), i) != draw.positions.end()) continue;
      draw.positions.push_back(i);
      ++draw.padded;
    }
    spdlog::debug("sample_negatives: padded {} negatives below threshold {:.4f}", draw.padded, draw.threshold);
  }
  return draw;
}

std::string to_csv(const std::vector<RankedCandidate>& ranked, const core::Dataset& dataset) {
  std::ostringstream out;
  out << "image_id,item,p_obj,p_roi,p_tri,P\n";
  char line[256];
  for (const auto& r : ranked) {
    std::snprintf(line, sizeof line, "%s,%d,%.10f,%.10f,%.10f,%.10f\n",
                  dataset.items[static_cast<std::size_t>(r.item)].image_id.c_str(), r.item, r.scores.p_obj,
                  r.scores.p_roi, r.scores.p_tri, r.scores.p);
    out << line;
  }
  return out.str();
}

}  // namespace saco::retrieval
