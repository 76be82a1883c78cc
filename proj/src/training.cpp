#include "saco/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "saco/autograd/ops.hpp"
#include "saco/contrastive.hpp"
#include "saco/core/rng.hpp"
#include "saco/error.hpp"
#include "saco/search.hpp"

namespace saco::training {

using ad::Graph;
using ad::GradientBuffer;
using ad::Var;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ValidationError("train config: alpha and beta must be >= 0");
  if (!(tau > 0.0)) throw ValidationError("train config: tau must be > 0");
  if (!(lr_train > 0.0) || !(lr_finetune > 0.0)) throw ValidationError("train config: learning rates must be > 0");
  if (batch < 1) throw ValidationError("train config: batch must be >= 1");
  if (epochs_train < 0 || epochs_finetune < 0) throw ValidationError("train config: epochs must be >= 0");
  if (!(warmup >= 0.0 && warmup <= 1.0)) throw ValidationError("train config: warmup must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) throw ValidationError("train config: weight_decay must be >= 0");
  if (!(grad_clip >= 0.0)) throw ValidationError("train config: grad_clip must be >= 0");
  if (eval_every < 0) throw ValidationError("train config: eval_every must be >= 0");
  if (eval_beam < 1) throw ValidationError("train config: eval_beam must be >= 1");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["tau"] = tau;
  j["lr_train"] = lr_train;
  j["lr_finetune"] = lr_finetune;
  j["batch"] = batch;
  j["epochs_train"] = epochs_train;
  j["epochs_finetune"] = epochs_finetune;
  j["warmup"] = warmup;
  j["weight_decay"] = weight_decay;
  j["grad_clip"] = grad_clip;
  j["seed"] = seed;
  j["use_svc"] = use_svc;
  j["use_stc"] = use_stc;
  j["use_retrieval"] = use_retrieval;
  j["keep_contrastive"] = keep_contrastive;
  j["eval_every"] = eval_every;
  j["eval_beam"] = eval_beam;
  return j;
}

void TrainConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") alpha = value.get<double>();
      else if (key == "beta") beta = value.get<double>();
      else if (key == "tau") tau = value.get<double>();
      else if (key == "lr_train") lr_train = value.get<double>();
      else if (key == "lr_finetune") lr_finetune = value.get<double>();
      else if (key == "batch") batch = value.get<int>();
      else if (key == "epochs_train") epochs_train = value.get<int>();
      else if (key == "epochs_finetune") epochs_finetune = value.get<int>();
      else if (key == "warmup") warmup = value.get<double>();
      else if (key == "weight_decay") weight_decay = value.get<double>();
      else if (key == "grad_clip") grad_clip = value.get<double>();
      else if (key == "seed") seed = value.get<std::uint64_t>();
      else if (key == "use_svc") use_svc = value.get<bool>();
      else if (key == "use_stc") use_stc = value.get<bool>();
      else if (key == "use_retrieval") use_retrieval = value.get<bool>();
      else if (key == "keep_contrastive") keep_contrastive = value.get<bool>();
      else if (key == "eval_every") eval_every = value.get<int>();
      else if (key == "eval_beam") eval_beam = value.get<int>();
      else throw ValidationError("unknown train config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  validate();
}

// ---------------------------------------------------------------- report

nlohmann::ordered_json EpochReport::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["stage"] = stage;
  j["l_cap"] = l_cap;
  j["l_svc"] = l_svc;
  j["l_stc"] = l_stc;
  j["total"] = total;
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  j["steps"] = steps;
  j["skipped_steps"] = skipped_steps;
  j["positive_p"] = positive_p;
  j["negative_p"] = negative_p;
  j["threshold"] = threshold;
  j["positive_cos"] = positive_cos;
  j["negative_cos"] = negative_cos;
  j["padded_negatives"] = padded_negatives;
  j["mean_reward"] = mean_reward;
  j["frac_positive_reward"] = frac_positive_reward;
  if (eval) {
    j["eval"] = {{"bleu1", eval->bleu1}, {"bleu4", eval->bleu4}, {"rougeL", eval->rouge_l}, {"cider", eval->cider}};
  }
  return j;
}

std::string TrainReport::csv_header() {
  return "epoch,stage,l_cap,l_svc,l_stc,total,lr,grad_norm,steps,skipped_steps,positive_p,negative_p,"
         "threshold,positive_cos,negative_cos,padded_negatives,mean_reward,frac_positive_reward,"
         "bleu1,bleu4,rougeL,cider";
}

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << csv_header() << "\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.stage << ',' << r.l_cap << ',' << r.l_svc << ',' << r.l_stc << ',' << r.total << ','
        << r.lr << ',' << r.grad_norm << ',' << r.steps << ',' << r.skipped_steps << ',' << r.positive_p << ','
        << r.negative_p << ',' << r.threshold << ',' << r.positive_cos << ',' << r.negative_cos << ','
        << r.padded_negatives << ',' << r.mean_reward << ',' << r.frac_positive_reward;
    if (r.eval) {
      out << ',' << r.eval->bleu1 << ',' << r.eval->bleu4 << ',' << r.eval->rouge_l << ',' << r.eval->cider;
    } else {
      out << ",,,,";
    }
    out << "\n";
  }
  return out.str();
}

std::string TrainReport::to_jsonl() const {
  std::string out;
  for (const auto& r : rows) out += r.to_json().dump() + "\n";
  return out;
}

void TrainReport::write(const std::string& csv_path, const std::string& jsonl_path) const {
  std::ofstream csv(csv_path);
  std::ofstream jsonl(jsonl_path);
  if (!csv || !jsonl) throw RuntimeError("cannot write train report to " + csv_path);
  csv << to_csv();
  jsonl << to_jsonl();
}

// ---------------------------------------------------------------- losses

double total_loss(double l_cap, double l_svc, double l_stc, double alpha, double beta) {
  if (!std::isfinite(l_cap) || !std::isfinite(l_svc) || !std::isfinite(l_stc)) {
    throw ValidationError("total_loss: non-finite component");
  }
  return l_cap + alpha * l_svc + beta * l_stc;
}

Var total_loss(Var l_cap, Var l_svc, Var l_stc, double alpha, double beta) {
  Var total = l_cap;
  if (l_svc.graph != nullptr && alpha != 0.0) total = ad::add(total, ad::scale(l_svc, alpha));
  if (l_stc.graph != nullptr && beta != 0.0) total = ad::add(total, ad::scale(l_stc, beta));
  return total;
}

double scst_reward(const std::string& sampled, const std::string& greedy,
                   const std::vector<std::string>& references, const metrics::CiderD& scorer) {
  if (references.empty()) throw ValidationError("scst_reward: no references");
  return scorer.score(sampled, references) - scorer.score(greedy, references);
}

// ---------------------------------------------------------------- sampling

namespace {

// First item index of every image.
std::vector<int> image_representatives(const core::Dataset& data) {
  std::vector<int> rep(static_cast<std::size_t>(data.num_images), -1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& r = rep[static_cast<std::size_t>(data.items[i].image_index)];
    if (r < 0) r = static_cast<int>(i);
  }
  return rep;
}

double cos_or_zero(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

retrieval::RepresentationCache build_cache(const Model& model, const core::Dataset& data, int epoch, Exec exec) {
  retrieval::RepresentationCache cache;
  cache.epoch = epoch;
  cache.num_styles = data.num_styles();
  const auto rep = image_representatives(data);
  const auto styles = static_cast<std::size_t>(data.num_styles());
  cache.pooled.resize(rep.size() * styles);
  for_each_index(cache.pooled.size(), exec, [&](std::size_t k) {
    const auto image = k / styles;
    const int style = static_cast<int>(k % styles);
    const int item = rep[image];
    if (item < 0) {
      cache.pooled[k] = Eigen::VectorXd::Zero(model.config().d);
      return;
    }
    cache.pooled[k] = model.pooled_visual(*data.items[static_cast<std::size_t>(item)].features, style);
  });
  cache.triplet.resize(data.size());
  for_each_index(data.size(), exec, [&](std::size_t i) {
    const auto& it = data.items[i];
    cache.triplet[i] = model.triplet_vector(*it.features, it.style_id, it.caption);
  });
  return cache;
}

std::vector<AnchorSample> draw_samples(const core::Dataset& data, const retrieval::RepresentationCache& cache,
                                       const retrieval::SamplerConfig& sampler, const TrainConfig& config,
                                       int epoch, Exec exec) {
  sampler.validate();
  std::vector<AnchorSample> out(data.size());
  const auto e = static_cast<std::uint64_t>(epoch);
  for_each_index(data.size(), exec, [&](std::size_t a) {
    const auto ranked = retrieval::rank_candidates(static_cast<int>(a), data, cache, sampler, epoch, Exec::kSerial);
    AnchorSample s;
    std::size_t pos = 0;
    std::vector<std::size_t> negs;
    if (config.use_retrieval) {
      auto rng_pos = core::stream_rng(config.seed, core::Stream::kPositive, e, a);
      pos = retrieval::sample_positive(ranked, sampler.top_k_pos, rng_pos);
      auto rng_neg = core::stream_rng(config.seed, core::Stream::kNegative, e, a);
      auto draw = retrieval::sample_negatives(ranked, sampler.num_negatives, sampler.omega, epoch, rng_neg, pos);
      negs = std::move(draw.positions);
      s.threshold = draw.threshold;
      s.padded = draw.padded;
    } else {
      // Ablation: positive and negatives drawn uniformly from other images.
      auto rng = core::stream_rng(config.seed, core::Stream::kRandomPairs, e, a);
      std::vector<std::size_t> order(ranked.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      const auto need = std::min(order.size(), static_cast<std::size_t>(sampler.num_negatives) + 1);
      for (std::size_t k = 0; k < need; ++k) {
        const auto j = k + static_cast<std::size_t>(search::uniform01(rng) * static_cast<double>(order.size() - k));
        std::swap(order[k], order[j]);
      }
      pos = order[0];
      negs.assign(order.begin() + 1, order.begin() + static_cast<std::ptrdiff_t>(need));
    }
    s.positive = ranked[pos].item;
    s.positive_p = ranked[pos].scores.p;
    double np = 0.0;
    for (auto n : negs) {
      s.negatives.push_back(ranked[n].item);
      np += ranked[n].scores.p;
    }
    s.negative_p = negs.empty() ? 0.0 : np / static_cast<double>(negs.size());
    const int styles = data.num_styles();
    if (styles > 1 && config.effective_beta() > 0.0) {
      auto rng = core::stream_rng(config.seed, core::Stream::kCorruptStyle, e, a);
      int r = static_cast<int>(search::uniform01(rng) * (styles - 1));
      if (r >= data.items[a].style_id) ++r;
      s.corrupt_style = r;
    }
    out[a] = std::move(s);
  });
  return out;
}

AnchorLosses anchor_losses(Graph& g, const Model& model, const core::Dataset& data, int anchor,
                           const AnchorSample& sample, const TrainConfig& config) {
  const auto& A = data.items.at(static_cast<std::size_t>(anchor));
  std::map<std::pair<int, int>, encoders::FusedRepresentation> encoded;
  const auto encode = [&](int item, int style) {
    const auto& it = data.items.at(static_cast<std::size_t>(item));
    const auto key = std::make_pair(it.image_index, style);
    auto found = encoded.find(key);
    if (found == encoded.end()) found = encoded.emplace(key, model.encode(g, *it.features, style)).first;
    return found->second;
  };

  const double alpha = config.effective_alpha();
  const double beta = config.effective_beta();
  AnchorLosses out;
  const auto fused = encode(anchor, A.style_id);
  const auto pass = model.run_decoder(g, fused, A.caption);
  out.l_cap = pass.caption_loss;

  if (alpha > 0.0) {
    const auto positive = encode(sample.positive, A.style_id);
    std::vector<encoders::FusedRepresentation> negatives;
    for (int n : sample.negatives) negatives.push_back(encode(n, A.style_id));
    out.l_svc = contrastive::svc_loss(fused, positive, negatives, config.tau);
  }
  if (beta > 0.0) {
    const auto triplet = [&](int item) {
      const auto& it = data.items.at(static_cast<std::size_t>(item));
      return model.run_decoder(g, encode(item, it.style_id), it.caption).h;
    };
    const Var h_pos = triplet(sample.positive);
    std::vector<Var> h_negs;
    for (int n : sample.negatives) h_negs.push_back(triplet(n));
    if (sample.corrupt_style >= 0) {
      h_negs.push_back(model.run_decoder(g, encode(anchor, sample.corrupt_style), A.caption).h);
    }
    out.l_stc = contrastive::stc_loss(pass.h, h_pos, h_negs, config.tau);
  }
  out.total = total_loss(out.l_cap, out.l_svc, out.l_stc, alpha, beta);
  return out;
}

// ---------------------------------------------------------------- trainer

namespace {

long steps_per_epoch(std::size_t n, int batch) {
  return static_cast<long>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

[[noreturn]] void non_finite(const core::DatasetItem& item, const std::string& stage, const LossValues& v) {
  std::ostringstream msg;
  msg.precision(17);
  msg << stage << ": non-finite loss for item image_id=" << item.image_id << " style=" << item.style_id
      << " (l_cap=" << v.l_cap << ", l_svc=" << v.l_svc << ", l_stc=" << v.l_stc << ", total=" << v.total << ")";
  throw RuntimeError(msg.str());
}

double value_or_zero(Var v) { return v.graph == nullptr ? 0.0 : v.scalar(); }

}  // namespace

Trainer::Trainer(Model& model, const core::Dataset& data, TrainConfig config, retrieval::SamplerConfig sampler,
                 Exec exec)
    : model_(&model), data_(&data), config_(std::move(config)), sampler_(sampler), exec_(exec) {
  config_.validate();
  sampler_.validate();
  if (data.size() == 0) throw ValidationError("trainer: empty dataset");
  if (data.num_styles() != model.config().num_styles) {
    throw ValidationError("trainer: dataset has " + std::to_string(data.num_styles()) + " styles, model expects " +
                          std::to_string(model.config().num_styles));
  }
  if (data.m() != model.config().m || data.d_raw() != model.config().d_raw) {
    throw ValidationError("trainer: feature shape does not match the model");
  }
  // Document frequencies over one reference set per (image, style) pair,
  // frozen for the whole fine-tuning stage.
  std::map<std::pair<int, int>, std::vector<std::string>> sets;
  for (const auto& it : data.items) sets[{it.image_index, it.style_id}].push_back(it.caption_text);
  std::vector<std::vector<std::string>> refs;
  for (auto& [key, v] : sets) refs.push_back(std::move(v));
  cider_ = std::make_unique<metrics::CiderD>(refs);
}

void Trainer::begin_train() {
  optim::AdamWConfig c;
  c.lr = config_.lr_train;
  c.weight_decay = config_.weight_decay;
  const long total = steps_per_epoch(data_->size(), config_.batch) * config_.epochs_train;
  c.warmup_steps = std::lround(config_.warmup * static_cast<double>(total));
  optimizer_ = std::make_unique<optim::AdamW>(model_->params(), c);
}

void Trainer::begin_finetune() {
  optim::AdamWConfig c;
  c.lr = config_.lr_finetune;
  c.weight_decay = config_.weight_decay;
  const long total = steps_per_epoch(data_->size(), config_.batch) * config_.epochs_finetune;
  c.warmup_steps = std::lround(config_.warmup * static_cast<double>(total));
  optimizer_ = std::make_unique<optim::AdamW>(model_->params(), c);
}

std::vector<std::vector<int>> Trainer::batches(const std::string& stage, int epoch) const {
  std::vector<int> order(data_->size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = core::stream_rng(config_.seed, core::Stream::kShuffle, stage == "train" ? 0 : 1,
                              static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(search::uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<int>> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.batch)) {
    const auto end = std::min(order.size(), start + static_cast<std::size_t>(config_.batch));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

GradientBuffer Trainer::train_gradient(const std::vector<int>& anchors, const std::vector<AnchorSample>& samples,
                                       std::vector<LossValues>* losses) const {
  const auto& store = model_->params();
  std::vector<GradientBuffer> grads(anchors.size());
  std::vector<LossValues> values(anchors.size());
  for_each_index(anchors.size(), exec_, [&](std::size_t k) {
    const int a = anchors[k];
    Graph g(store);
    const auto L = anchor_losses(g, *model_, *data_, a, samples.at(static_cast<std::size_t>(a)), config_);
    LossValues v{value_or_zero(L.l_cap), value_or_zero(L.l_svc), value_or_zero(L.l_stc), L.total.scalar()};
    if (!std::isfinite(v.total)) non_finite(data_->items[static_cast<std::size_t>(a)], "train", v);
    values[k] = v;
    grads[k] = GradientBuffer(store);
    g.backward(L.total, grads[k]);
  });
  GradientBuffer total(store);
  const double w = 1.0 / static_cast<double>(anchors.size());
  for (const auto& gb : grads) total.add_scaled(gb, w);
  if (losses != nullptr) *losses = std::move(values);
  return total;
}

GradientBuffer Trainer::finetune_gradient(const std::vector<int>& items, int epoch, std::vector<double>* rewards,
                                          const std::vector<AnchorSample>* samples,
                                          std::vector<double>* losses) const {
  const auto& store = model_->params();
  const int max_len = model_->config().max_len;
  std::vector<GradientBuffer> grads(items.size());
  std::vector<double> r(items.size(), 0.0);
  std::vector<double> l(items.size(), 0.0);
  for_each_index(items.size(), exec_, [&](std::size_t k) {
    const int i = items[k];
    const auto& it = data_->items[static_cast<std::size_t>(i)];
    grads[k] = GradientBuffer(store);
    const auto bound = model_->bind(*it.features, it.style_id);
    const auto greedy = bound.greedy_decode(max_len);
    auto rng = core::stream_rng(config_.seed, core::Stream::kScstSample, static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(i));
    const auto sampled = bound.sample_decode(rng, max_len, 1.0);
    const auto refs = data_->references(it.image_index, it.style_id);
    r[k] = scst_reward(data_->text(sampled.tokens), data_->text(greedy), refs, *cider_);
    const bool contrastive = config_.keep_contrastive && samples != nullptr;
    if (r[k] == 0.0 && !contrastive) return;  // the policy term vanishes exactly

    Graph g(store);
    Var loss;
    if (r[k] != 0.0) {
      const auto state = model_->run_triplet(g, *it.features, it.style_id, sampled.tokens).state;
      const Var log_p = ad::sum(ad::pick(ad::log_softmax_rows(state.logits), sampled.tokens));
      loss = ad::scale(log_p, -r[k]);
    }
    if (contrastive) {
      TrainConfig c = config_;
      const auto L = anchor_losses(g, *model_, *data_, i, samples->at(static_cast<std::size_t>(i)), c);
      Var extra = total_loss(g.constant(ad::Matrix::Zero(1, 1)), L.l_svc, L.l_stc, c.effective_alpha(),
                             c.effective_beta());
      loss = loss.graph == nullptr ? extra : ad::add(loss, extra);
    }
    l[k] = loss.scalar();
    if (!std::isfinite(l[k])) non_finite(it, "finetune", LossValues{0.0, 0.0, 0.0, l[k]});
    g.backward(loss, grads[k]);
  });
  GradientBuffer total(store);
  const double w = 1.0 / static_cast<double>(items.size());
  for (const auto& gb : grads) total.add_scaled(gb, w);
  if (rewards != nullptr) *rewards = std::move(r);
  if (losses != nullptr) *losses = std::move(l);
  return total;
}

bool Trainer::apply(GradientBuffer& grads, double* norm, BatchEvent* event) {
  if (!optimizer_) throw ValidationError("trainer: call begin_train/begin_finetune first");
  *norm = 0.0;
  if (grads.all_zero()) {
    event->stepped = false;
    event->max_abs_update = 0.0;
    return false;
  }
  *norm = optim::clip_global_norm(grads, config_.grad_clip);
  std::vector<ad::Matrix> before;
  if (observer_) {
    for (const auto& p : model_->params()) before.push_back(p.value);
  }
  optimizer_->step(model_->params(), grads);
  event->stepped = true;
  if (observer_) {
    double change = 0.0;
    std::size_t k = 0;
    for (const auto& p : model_->params()) change = std::max(change, (p.value - before[k++]).cwiseAbs().maxCoeff());
    event->max_abs_update = change;
  }
  return true;
}

EpochReport Trainer::train_epoch(int epoch) {
  if (!optimizer_) begin_train();
  const auto cache = build_cache(*model_, *data_, epoch, exec_);
  const auto samples = draw_samples(*data_, cache, sampler_, config_, epoch, exec_);

  EpochReport rep;
  rep.epoch = epoch;
  rep.stage = "train";
  const double n = static_cast<double>(data_->size());
  for (std::size_t a = 0; a < samples.size(); ++a) {
    const auto& s = samples[a];
    const auto& A = data_->items[a];
    const auto& anchor_vec = cache.pooled_for(A.image_index, A.style_id);
    rep.positive_p += s.positive_p / n;
    rep.negative_p += s.negative_p / n;
    rep.threshold += s.threshold / n;
    rep.padded_negatives += s.padded;
    rep.positive_cos +=
        cos_or_zero(anchor_vec, cache.pooled_for(data_->items[static_cast<std::size_t>(s.positive)].image_index,
                                                 A.style_id)) / n;
    double nc = 0.0;
    for (int neg : s.negatives) {
      nc += cos_or_zero(anchor_vec, cache.pooled_for(data_->items[static_cast<std::size_t>(neg)].image_index,
                                                     A.style_id));
    }
    if (!s.negatives.empty()) rep.negative_cos += nc / static_cast<double>(s.negatives.size()) / n;
  }

  int b = 0;
  double norm_sum = 0.0;
  for (const auto& batch : batches("train", epoch)) {
    std::vector<LossValues> values;
    auto grads = train_gradient(batch, samples, &values);
    for (const auto& v : values) {
      rep.l_cap += v.l_cap / n;
      rep.l_svc += v.l_svc / n;
      rep.l_stc += v.l_stc / n;
      rep.total += v.total / n;
    }
    BatchEvent event;
    event.stage = "train";
    event.epoch = epoch;
    event.batch = b++;
    rep.lr = optimizer_->lr_at(optimizer_->steps_taken());
    double norm = 0.0;
    if (apply(grads, &norm, &event)) {
      ++rep.steps;
    } else {
      ++rep.skipped_steps;
    }
    norm_sum += norm;
    if (observer_) observer_(event);
  }
  rep.grad_norm = b > 0 ? norm_sum / b : 0.0;
  if (config_.eval_every > 0 && (epoch + 1) % config_.eval_every == 0) {
    rep.eval = evaluate(*model_, *data_, config_.eval_beam, exec_).metrics;
  }
  spdlog::info("train epoch {}: L={:.6f} (cap {:.6f}, svc {:.6f}, stc {:.6f}) pos_cos={:.4f} neg_cos={:.4f}", epoch,
               rep.total, rep.l_cap, rep.l_svc, rep.l_stc, rep.positive_cos, rep.negative_cos);
  return rep;
}

EpochReport Trainer::finetune_epoch(int epoch) {
  if (!optimizer_) begin_finetune();
  std::vector<AnchorSample> samples;
  if (config_.keep_contrastive) {
    // Offset so fine-tuning draws never reuse a training-stage stream.
    const int mu = config_.epochs_train + epoch;
    samples = draw_samples(*data_, build_cache(*model_, *data_, mu, exec_), sampler_, config_, mu, exec_);
  }
  EpochReport rep;
  rep.epoch = epoch;
  rep.stage = "finetune";
  const double n = static_cast<double>(data_->size());
  int b = 0;
  int positive = 0;
  double norm_sum = 0.0;
  for (const auto& batch : batches("finetune", epoch)) {
    BatchEvent event;
    event.stage = "finetune";
    event.epoch = epoch;
    event.batch = b++;
    std::vector<double> losses;
    auto grads = finetune_gradient(batch, epoch, &event.rewards, samples.empty() ? nullptr : &samples, &losses);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      rep.mean_reward += event.rewards[k] / n;
      rep.total += losses[k] / n;
      if (event.rewards[k] > 0.0) ++positive;
    }
    rep.lr = optimizer_->lr_at(optimizer_->steps_taken());
    double norm = 0.0;
    if (apply(grads, &norm, &event)) {
      ++rep.steps;
    } else {
      ++rep.skipped_steps;
    }
    norm_sum += norm;
    if (observer_) observer_(event);
  }
  rep.grad_norm = b > 0 ? norm_sum / b : 0.0;
  rep.frac_positive_reward = static_cast<double>(positive) / n;
  if (config_.eval_every > 0 && (epoch + 1) % config_.eval_every == 0) {
    rep.eval = evaluate(*model_, *data_, config_.eval_beam, exec_).metrics;
  }
  spdlog::info("finetune epoch {}: mean R={:.6f} frac R>0={:.3f} steps={} skipped={}", epoch, rep.mean_reward,
               rep.frac_positive_reward, rep.steps, rep.skipped_steps);
  return rep;
}

// ---------------------------------------------------------------- evaluation

EvalResult evaluate(const Model& model, const core::Dataset& data, int beam, Exec exec) {
  if (beam < 1) throw ValidationError("evaluate: beam must be >= 1");
  std::vector<int> firsts;
  std::map<std::pair<int, int>, bool> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& it = data.items[i];
    if (seen.emplace(std::make_pair(it.image_index, it.style_id), true).second) firsts.push_back(static_cast<int>(i));
  }
  std::vector<std::string> texts(firsts.size());
  for_each_index(firsts.size(), exec, [&](std::size_t k) {
    const auto& it = data.items[static_cast<std::size_t>(firsts[k])];
    texts[k] = data.text(model.bind(*it.features, it.style_id).beam_search(beam, model.config().max_len));
  });
  EvalResult out;
  for (std::size_t k = 0; k < firsts.size(); ++k) {
    const auto& it = data.items[static_cast<std::size_t>(firsts[k])];
    const auto key = it.image_id + "|" + data.styles[static_cast<std::size_t>(it.style_id)];
    out.captions[key] = texts[k];
    out.references[key] = data.references(it.image_index, it.style_id);
  }
  out.metrics = metrics::score_all(out.captions, out.references, exec);
  return out;
}

FitStatistics fit_statistics(const Model& model, const core::Dataset& data, Exec exec) {
  std::vector<int> correct(data.size(), 0);
  std::vector<int> total(data.size(), 0);
  std::vector<int> exact(data.size(), 0);
  for_each_index(data.size(), exec, [&](std::size_t i) {
    const auto& it = data.items[i];
    Graph g(model.params(), false);
    const auto pass = model.run_triplet(g, *it.features, it.style_id, it.caption);
    const auto& logits = pass.state.logits.value();
    for (std::size_t t = 0; t < it.caption.size(); ++t) {
      if (it.caption[t] == core::kPad) continue;
      ++total[i];
      Eigen::VectorXd row = logits.row(static_cast<Eigen::Index>(t)).transpose();
      if (search::argmax(row) == it.caption[t]) ++correct[i];
    }
    exact[i] = model.bind(*it.features, it.style_id).greedy_decode(model.config().max_len) == it.caption ? 1 : 0;
  });
  FitStatistics s;
  const double tok = std::accumulate(total.begin(), total.end(), 0.0);
  s.token_accuracy = tok > 0 ? std::accumulate(correct.begin(), correct.end(), 0.0) / tok : 0.0;
  s.exact_match = std::accumulate(exact.begin(), exact.end(), 0.0) / static_cast<double>(data.size());
  return s;
}

ContrastStatistics contrast_statistics(const Model& model, const core::Dataset& data,
                                       const retrieval::SamplerConfig& sampler, const TrainConfig& config,
                                       int epoch, Exec exec) {
  const auto cache = build_cache(model, data, epoch, exec);
  const auto samples = draw_samples(data, cache, sampler, config, epoch, exec);
  ContrastStatistics s;
  const double n = static_cast<double>(data.size());
  for (std::size_t a = 0; a < samples.size(); ++a) {
    const auto& A = data.items[a];
    const auto& anchor_vec = cache.pooled_for(A.image_index, A.style_id);
    const auto& pos = data.items[static_cast<std::size_t>(samples[a].positive)];
    s.positive_cos += cos_or_zero(anchor_vec, cache.pooled_for(pos.image_index, A.style_id)) / n;
    double nc = 0.0;
    for (int neg : samples[a].negatives) {
      nc += cos_or_zero(anchor_vec, cache.pooled_for(data.items[static_cast<std::size_t>(neg)].image_index, A.style_id));
    }
    if (!samples[a].negatives.empty()) s.negative_cos += nc / static_cast<double>(samples[a].negatives.size()) / n;
  }
  return s;
}

}  // namespace saco::training
