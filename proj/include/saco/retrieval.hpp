#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saco/core/dataset.hpp"
#include "saco/parallel.hpp"

namespace saco::retrieval {

struct RetrievalScores {
  double p_obj = 0.0;
  double p_roi = 0.0;
  double p_tri = 0.0;
  double p = 0.0;
};

struct SamplerConfig {
  double theta = 0.9;  // decay of the object-overlap weight per epoch
  double phi = 0.5;    // RoI vs triplet trade-off
  double omega = 0.8;  // negative threshold schedule
  int top_k_pos = 10;
  int num_negatives = 8;

  void validate() const;
};

// |anchor ∩ candidate| / |anchor|. Inputs are sorted unique object lists.
double object_overlap_score(const std::vector<std::string>& anchor,
                            const std::vector<std::string>& candidate);

// Cosine similarity of the pooled style-aware features.
double roi_score(const Eigen::MatrixXd& v_s_anchor, const Eigen::MatrixXd& v_s_candidate);
double roi_score_pooled(const Eigen::VectorXd& pooled_anchor, const Eigen::VectorXd& pooled_candidate);

double triplet_score(const Eigen::VectorXd& h_anchor, const Eigen::VectorXd& h_candidate);

// theta^mu * p_obj + (1 - theta^mu) * (phi * p_roi + (1 - phi) * p_tri)
double combined_score(double p_obj, double p_roi, double p_tri, double theta, double phi, int epoch);

// max(0.1, p_max - omega^mu)
double negative_threshold(double p_max, double omega, int epoch);

// Learned representations snapshotted once per epoch. `pooled` holds, for
// every image and every style, pool(V^s) of that image encoded under that
// style; `triplet` holds the triplet representation of every item.
struct RepresentationCache {
  int epoch = -1;
  int num_styles = 0;
  std::vector<Eigen::VectorXd> pooled;   // index: image * num_styles + style
  std::vector<Eigen::VectorXd> triplet;  // index: item

  bool empty() const { return pooled.empty(); }
  const Eigen::VectorXd& pooled_for(int image, int style) const {
    return pooled[static_cast<std::size_t>(image * num_styles + style)];
  }
};

struct RankedCandidate {
  int item = -1;  // index into the dataset
  RetrievalScores scores;
};

// Scores every item with a different image than the anchor and sorts by P
// descending (ties: image_id, then item index). An empty cache is only
// allowed at epoch 0, where P reduces to object overlap. Throws when fewer
// than top_k_pos + num_negatives candidates exist.
std::vector<RankedCandidate> rank_candidates(int anchor, const core::Dataset& dataset,
                                             const RepresentationCache& cache,
                                             const SamplerConfig& config, int epoch,
                                             Exec exec = Exec::kParallel);

// Rankings for every anchor of the dataset.
std::vector<std::vector<RankedCandidate>> rank_all(const core::Dataset& dataset,
                                                   const RepresentationCache& cache,
                                                   const SamplerConfig& config, int epoch,
                                                   Exec exec = Exec::kParallel);

// Uniform draw among the first top_k entries; returns a position in `ranked`.
std::size_t sample_positive(const std::vector<RankedCandidate>& ranked, int top_k,
                            std::mt19937_64& rng);

struct NegativeDraw {
  std::vector<std::size_t> positions;  // into `ranked`
  double threshold = 0.0;
  int padded = 0;  // how many were taken from the low end to fill M
};

// Uniform sample without replacement from candidates with
// P < negative_threshold(P_max, omega, epoch), excluding `exclude`. When too
// few qualify, pads with the lowest-P remaining candidates.
NegativeDraw sample_negatives(const std::vector<RankedCandidate>& ranked, int count, double omega,
                              int epoch, std::mt19937_64& rng, std::size_t exclude = SIZE_MAX);

// CSV: image_id,item,p_obj,p_roi,p_tri,P (header line included).
std::string to_csv(const std::vector<RankedCandidate>& ranked, const core::Dataset& dataset);

}  // namespace saco::retrieval
