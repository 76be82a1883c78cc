#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saco/core/dataset.hpp"
#include "saco/metrics.hpp"
#include "saco/model.hpp"
#include "saco/optimizer.hpp"
#include "saco/parallel.hpp"
#include "saco/retrieval.hpp"

namespace saco::training {

struct TrainConfig {
  double alpha = 0.5;
  double beta = 0.7;
  double tau = 0.08;
  double lr_train = 1e-4;
  double lr_finetune = 1e-5;
  int batch = 16;
  int epochs_train = 10;
  int epochs_finetune = 3;
  double warmup = 0.1;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
  bool use_svc = true;
  bool use_stc = true;
  bool use_retrieval = true;
  bool keep_contrastive = false;
  int eval_every = 0;  // evaluate every k epochs; 0 = never inside the loop
  int eval_beam = 3;

  double effective_alpha() const { return use_svc ? alpha : 0.0; }
  double effective_beta() const { return use_stc ? beta : 0.0; }

  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Overlays the keys present in `j`; unknown keys are rejected.
  void merge_json(const nlohmann::json& j);
};

struct EpochReport {
  int epoch = 0;
  std::string stage;  // "train" or "finetune"
  double l_cap = 0.0;
  double l_svc = 0.0;
  double l_stc = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over batches
  int steps = 0;
  int skipped_steps = 0;   // batches whose gradient was exactly zero
  // Sampler statistics (train stage).
  double positive_p = 0.0;
  double negative_p = 0.0;
  double threshold = 0.0;
  double positive_cos = 0.0;  // pooled V^s, anchor vs positive
  double negative_cos = 0.0;  // pooled V^s, anchor vs negatives
  int padded_negatives = 0;
  // Reward statistics (finetune stage).
  double mean_reward = 0.0;
  double frac_positive_reward = 0.0;
  std::optional<metrics::MetricMap> eval;

  nlohmann::ordered_json to_json() const;
};

struct TrainReport {
  std::vector<EpochReport> rows;

  static std::string csv_header();
  std::string to_csv() const;
  std::string to_jsonl() const;
  void write(const std::string& csv_path, const std::string& jsonl_path) const;
};

double total_loss(double l_cap, double l_svc, double l_stc, double alpha, double beta);
ad::Var total_loss(ad::Var l_cap, ad::Var l_svc, ad::Var l_stc, double alpha, double beta);

// CIDEr(sampled) - CIDEr(greedy) under a frozen document-frequency table.
double scst_reward(const std::string& sampled, const std::string& greedy,
                   const std::vector<std::string>& references, const metrics::CiderD& scorer);

// Positive and negatives picked for one anchor, as dataset item indices.
struct AnchorSample {
  int positive = -1;
  std::vector<int> negatives;
  int corrupt_style = -1;  // style for the corrupted STC negative, -1 when none
  double positive_p = 0.0;
  double negative_p = 0.0;
  double threshold = 0.0;
  int padded = 0;
};

struct AnchorLosses {
  ad::Var l_cap;
  ad::Var l_svc;  // invalid (graph == nullptr) when alpha == 0
  ad::Var l_stc;  // invalid when beta == 0
  ad::Var total;
};

struct LossValues {
  double l_cap = 0.0;
  double l_svc = 0.0;
  double l_stc = 0.0;
  double total = 0.0;
};

retrieval::RepresentationCache build_cache(const Model& model, const core::Dataset& data, int epoch,
                                           Exec exec = Exec::kParallel);

// One draw per anchor for `epoch`. Streams are keyed by (seed, epoch, anchor).
std::vector<AnchorSample> draw_samples(const core::Dataset& data, const retrieval::RepresentationCache& cache,
                                       const retrieval::SamplerConfig& sampler, const TrainConfig& config,
                                       int epoch, Exec exec = Exec::kParallel);

// Builds L for one anchor on `g`.
AnchorLosses anchor_losses(ad::Graph& g, const Model& model, const core::Dataset& data, int anchor,
                           const AnchorSample& sample, const TrainConfig& config);

struct BatchEvent {
  std::string stage;
  int epoch = 0;
  int batch = 0;
  std::vector<double> rewards;  // finetune only
  bool stepped = false;
  double max_abs_update = 0.0;  // largest parameter change of this batch
};

class Trainer {
 public:
  Trainer(Model& model, const core::Dataset& data, TrainConfig config, retrieval::SamplerConfig sampler,
          Exec exec = Exec::kParallel);

  // Sets up the optimizer for a stage; the warm-up spans `warmup` of the
  // stage's total steps.
  void begin_train();
  void begin_finetune();

  EpochReport train_epoch(int epoch);
  EpochReport finetune_epoch(int epoch);

  // Averaged, unclipped gradient of one batch of anchors for the train stage.
  ad::GradientBuffer train_gradient(const std::vector<int>& anchors, const std::vector<AnchorSample>& samples,
                                    std::vector<LossValues>* losses = nullptr) const;
  // Averaged gradient of one fine-tuning batch; also returns the rewards.
  // With keep_contrastive, `samples` supplies the contrastive pairs.
  ad::GradientBuffer finetune_gradient(const std::vector<int>& items, int epoch, std::vector<double>* rewards,
                                       const std::vector<AnchorSample>* samples = nullptr,
                                       std::vector<double>* losses = nullptr) const;

  // Observer called after every batch (with max_abs_update filled in).
  void set_batch_observer(std::function<void(const BatchEvent&)> observer) { observer_ = std::move(observer); }

  const TrainConfig& config() const { return config_; }
  const metrics::CiderD& cider_scorer() const { return *cider_; }

 private:
  std::vector<std::vector<int>> batches(const std::string& stage, int epoch) const;
  bool apply(ad::GradientBuffer& grads, double* norm, BatchEvent* event);

  Model* model_;
  const core::Dataset* data_;
  TrainConfig config_;
  retrieval::SamplerConfig sampler_;
  Exec exec_;
  std::unique_ptr<optim::AdamW> optimizer_;
  std::unique_ptr<metrics::CiderD> cider_;
  std::function<void(const BatchEvent&)> observer_;
};

struct EvalResult {
  metrics::MetricMap metrics;
  metrics::CaptionMap captions;
  metrics::ReferenceMap references;
};

// Beam-search captions for every distinct (image, style) pair, scored
// against all references written for that pair. Keys are "image_id|style".
EvalResult evaluate(const Model& model, const core::Dataset& data, int beam = 3, Exec exec = Exec::kParallel);

struct FitStatistics {
  double token_accuracy = 0.0;  // teacher-forced argmax vs gold, all items
  double exact_match = 0.0;     // fraction of items whose greedy caption equals the gold one
};

FitStatistics fit_statistics(const Model& model, const core::Dataset& data, Exec exec = Exec::kParallel);

struct ContrastStatistics {
  double positive_cos = 0.0;
  double negative_cos = 0.0;
  double margin() const { return positive_cos - negative_cos; }
};

// Mean pooled-V^s cosine between anchors and their drawn positives /
// negatives (SVC pairing: everything encoded under the anchor's style).
ContrastStatistics contrast_statistics(const Model& model, const core::Dataset& data,
                                       const retrieval::SamplerConfig& sampler, const TrainConfig& config,
                                       int epoch, Exec exec = Exec::kParallel);

}  // namespace saco::training
