#include "saco/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "saco/data.hpp"
#include "saco/error.hpp"
#include "saco/metrics.hpp"

namespace saco::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void take(const json& j, const char* key, T& target, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() ? p : fs::absolute(base / p).lexically_normal();
}

}  // namespace

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["data"] = {{"manifest", manifest.string()}, {"min_freq", min_freq}};
  ordered_json m;
  m["d"] = model.d;
  m["d_h"] = model.d_h;
  m["enc_layers"] = model.enc_layers;
  m["enc_heads"] = model.enc_heads;
  m["dec_layers"] = model.dec_layers;
  m["dec_heads"] = model.dec_heads;
  m["ffn_mult"] = model.ffn_mult;
  m["max_len"] = model.max_len;
  m["decoder_uses_style_token"] = model.decoder_uses_style_token;
  j["model"] = m;
  j["train"] = train.to_json();
  ordered_json s;
  s["theta"] = sampler.theta;
  s["phi"] = sampler.phi;
  s["omega"] = sampler.omega;
  s["top_k_pos"] = sampler.top_k_pos;
  s["num_negatives"] = sampler.num_negatives;
  j["sampler"] = s;
  j["out"] = out.string();
  return j;
}

void RunConfig::merge_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"data", "model", "train", "sampler", "out"}, "config");
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, {"manifest", "min_freq"}, "data");
    std::string path;
    take(d, "manifest", path, "data");
    if (!path.empty()) manifest = resolve(path, base_dir);
    take(d, "min_freq", min_freq, "data");
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"d", "d_h", "enc_layers", "enc_heads", "dec_layers", "dec_heads", "ffn_mult", "max_len",
                       "decoder_uses_style_token"},
                   "model");
    take(m, "d", model.d, "model");
    take(m, "d_h", model.d_h, "model");
    take(m, "enc_layers", model.enc_layers, "model");
    take(m, "enc_heads", model.enc_heads, "model");
    take(m, "dec_layers", model.dec_layers, "model");
    take(m, "dec_heads", model.dec_heads, "model");
    take(m, "ffn_mult", model.ffn_mult, "model");
    take(m, "max_len", model.max_len, "model");
    take(m, "decoder_uses_style_token", model.decoder_uses_style_token, "model");
  }
  if (j.contains("train")) train.merge_json(j["train"]);
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    reject_unknown(s, {"theta", "phi", "omega", "top_k_pos", "num_negatives"}, "sampler");
    take(s, "theta", sampler.theta, "sampler");
    take(s, "phi", sampler.phi, "sampler");
    take(s, "omega", sampler.omega, "sampler");
    take(s, "top_k_pos", sampler.top_k_pos, "sampler");
    take(s, "num_negatives", sampler.num_negatives, "sampler");
    sampler.validate();
  }
  if (j.contains("out")) {
    std::string o;
    take(j, "out", o, "config");
    out = resolve(o, base_dir);
  }
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  RunConfig c;
  c.merge_json(read_json(path), fs::absolute(path).parent_path());
  return c;
}

namespace {

// ------------------------------------------------------------ overrides

// Flags that overlay config keys. Only flags given on the command line are
// applied, so file values survive otherwise.
struct Overrides {
  std::optional<std::string> manifest, out;
  std::optional<int> min_freq;
  std::optional<double> alpha, beta, tau, lr_train, lr_finetune, warmup, weight_decay, grad_clip;
  std::optional<int> batch, epochs_train, epochs_finetune, eval_every, eval_beam;
  std::optional<std::uint64_t> seed;
  std::optional<bool> use_svc, use_stc, use_retrieval, keep_contrastive;
  std::optional<double> theta, phi, omega;
  std::optional<int> top_k_pos, num_negatives;
  std::optional<int> d, d_h, enc_layers, enc_heads, dec_layers, dec_heads, ffn_mult, max_len;
  std::optional<bool> decoder_uses_style_token;

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifest, "Dataset manifest");
    app->add_option("--out", out, "Output directory");
    app->add_option("--min-freq", min_freq, "Vocabulary frequency cut-off");
    app->add_option("--alpha", alpha, "SVC loss weight");
    app->add_option("--beta", beta, "STC loss weight");
    app->add_option("--tau", tau, "InfoNCE temperature");
    app->add_option("--lr-train", lr_train, "Training learning rate");
    app->add_option("--lr-finetune", lr_finetune, "Fine-tuning learning rate");
    app->add_option("--batch", batch, "Batch size");
    app->add_option("--epochs-train", epochs_train, "Training epochs");
    app->add_option("--epochs-finetune", epochs_finetune, "Fine-tuning epochs");
    app->add_option("--warmup", warmup, "Warm-up fraction of the stage's steps");
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay");
    app->add_option("--grad-clip", grad_clip, "Global gradient norm cap (0 disables)");
    app->add_option("--seed", seed, "Root seed");
    app->add_option("--use-svc", use_svc, "Enable the SVC loss (true/false)");
    app->add_option("--use-stc", use_stc, "Enable the STC loss (true/false)");
    app->add_option("--use-retrieval", use_retrieval, "Retrieval-mined pairs; false draws them at random");
    app->add_option("--keep-contrastive", keep_contrastive, "Keep SVC/STC during fine-tuning (true/false)");
    app->add_option("--eval-every", eval_every, "Evaluate every k epochs (0: never)");
    app->add_option("--eval-beam", eval_beam, "Beam width for evaluation");
    app->add_option("--theta", theta, "Object-score decay");
    app->add_option("--phi", phi, "RoI vs triplet weight");
    app->add_option("--omega", omega, "Negative threshold schedule");
    app->add_option("--top-k-pos", top_k_pos, "Positive pool size");
    app->add_option("--num-negatives", num_negatives, "Negatives per anchor (M)");
    app->add_option("--d", d, "Encoder width");
    app->add_option("--d-h", d_h, "Decoder width");
    app->add_option("--enc-layers", enc_layers, "Encoder layers");
    app->add_option("--enc-heads", enc_heads, "Encoder heads");
    app->add_option("--dec-layers", dec_layers, "Decoder layers");
    app->add_option("--dec-heads", dec_heads, "Decoder heads");
    app->add_option("--ffn-mult", ffn_mult, "Feed-forward expansion");
    app->add_option("--max-len", max_len, "Maximum caption length");
    app->add_option("--decoder-uses-style-token", decoder_uses_style_token,
                    "Feed s^v to the decoder as a memory token (true/false)");
  }

  json as_json() const {
    json j = json::object();
    const auto put = [&j](const char* section, const char* key, const auto& v) {
      if (v) j[section][key] = *v;
    };
    if (manifest) j["data"]["manifest"] = fs::absolute(*manifest).string();
    if (out) j["out"] = fs::absolute(*out).string();
    put("data", "min_freq", min_freq);
    put("train", "alpha", alpha);
    put("train", "beta", beta);
    put("train", "tau", tau);
    put("train", "lr_train", lr_train);
    put("train", "lr_finetune", lr_finetune);
    put("train", "batch", batch);
    put("train", "epochs_train", epochs_train);
    put("train", "epochs_finetune", epochs_finetune);
    put("train", "warmup", warmup);
    put("train", "weight_decay", weight_decay);
    put("train", "grad_clip", grad_clip);
    put("train", "seed", seed);
    put("train", "use_svc", use_svc);
    put("train", "use_stc", use_stc);
    put("train", "use_retrieval", use_retrieval);
    put("train", "keep_contrastive", keep_contrastive);
    put("train", "eval_every", eval_every);
    put("train", "eval_beam", eval_beam);
    put("sampler", "theta", theta);
    put("sampler", "phi", phi);
    put("sampler", "omega", omega);
    put("sampler", "top_k_pos", top_k_pos);
    put("sampler", "num_negatives", num_negatives);
    put("model", "d", d);
    put("model", "d_h", d_h);
    put("model", "enc_layers", enc_layers);
    put("model", "enc_heads", enc_heads);
    put("model", "dec_layers", dec_layers);
    put("model", "dec_heads", dec_heads);
    put("model", "ffn_mult", ffn_mult);
    put("model", "max_len", max_len);
    put("model", "decoder_uses_style_token", decoder_uses_style_token);
    return j;
  }
};

RunConfig resolve_config(const std::optional<std::string>& config_path, const Overrides& overrides) {
  RunConfig c;
  if (config_path) c = load_run_config(*config_path);
  c.merge_json(overrides.as_json(), fs::current_path());
  if (c.manifest.empty()) throw ValidationError("no manifest given (config data.manifest or --manifest)");
  if (!fs::exists(c.manifest)) throw ValidationError("manifest not found: " + c.manifest.string());
  c.out = fs::absolute(c.out).lexically_normal();
  return c;
}

struct Loaded {
  data::Manifest manifest;
  core::Vocabulary vocab;
  core::Dataset dataset;
};

Loaded load_data(const fs::path& manifest_path, int min_freq, const core::Vocabulary* vocab) {
  Loaded l;
  l.manifest = data::load_manifest(manifest_path);
  l.vocab = vocab != nullptr ? *vocab : core::build_vocab(data::caption_corpus(l.manifest), min_freq);
  l.dataset = data::build_dataset(l.manifest, l.vocab);
  return l;
}

ModelConfig complete_model(ModelConfig m, const Loaded& l, std::uint64_t seed) {
  m.d_raw = l.dataset.d_raw();
  m.m = l.dataset.m();
  m.num_styles = l.dataset.num_styles();
  m.vocab_size = static_cast<int>(l.vocab.size());
  m.seed = seed;
  m.validate();
  return m;
}

void prepare_out(const RunConfig& c) {
  fs::create_directories(c.out);
  auto snapshot = c.to_json();
  write_text(c.out / "config.resolved.json", snapshot.dump(2) + "\n");
  write_text(c.out / "seed.txt", std::to_string(c.train.seed) + "\n");
}

std::string vocab_path(const fs::path& ckpt) { return ckpt.string() + ".vocab.json"; }

void save_all(const Model& model, const core::Vocabulary& vocab, const fs::path& ckpt) {
  save_checkpoint(model, ckpt.string());
  vocab.save(vocab_path(ckpt));
}

void dump_captions(const training::EvalResult& r, const fs::path& dir) {
  ordered_json c = r.captions;
  ordered_json refs = r.references;
  write_text(dir / "captions.json", c.dump(2) + "\n");
  write_text(dir / "references.json", refs.dump(2) + "\n");
  write_text(dir / "metrics.json", metrics::to_json(r.metrics));
}

// Runs the training stage (or fine-tuning when `init` is set) from a
// resolved config.
int run_training(const RunConfig& c, const std::optional<std::string>& init) {
  prepare_out(c);
  std::unique_ptr<Model> model;
  std::optional<core::Vocabulary> init_vocab;
  if (init) {
    if (!fs::exists(*init)) throw ValidationError("checkpoint not found: " + *init);
    init_vocab = core::Vocabulary::load(vocab_path(*init));
  }
  const auto loaded = load_data(c.manifest, c.min_freq, init_vocab ? &*init_vocab : nullptr);
  if (init) {
    model = load_checkpoint(*init);
  } else {
    model = std::make_unique<Model>(complete_model(c.model, loaded, c.train.seed));
  }
  spdlog::info("{} items, {} images, {} styles, vocab {}, {} parameters", loaded.dataset.size(),
               loaded.dataset.num_images, loaded.dataset.num_styles(), loaded.vocab.size(),
               model->params().num_scalars());

  training::Trainer trainer(*model, loaded.dataset, c.train, c.sampler);
  training::TrainReport report;
  ordered_json summary;
  const std::string stage = init ? "finetune" : "train";
  const auto report_base = c.out / (stage + "_report");
  try {
    if (init) {
      const auto before = training::evaluate(*model, loaded.dataset, c.train.eval_beam);
      summary["cider_before"] = before.metrics.cider;
      trainer.begin_finetune();
      for (int e = 0; e < c.train.epochs_finetune; ++e) report.rows.push_back(trainer.finetune_epoch(e));
    } else {
      trainer.begin_train();
      for (int e = 0; e < c.train.epochs_train; ++e) report.rows.push_back(trainer.train_epoch(e));
    }
  } catch (const RuntimeError& e) {
    ordered_json diag;
    diag["stage"] = stage;
    diag["error"] = e.what();
    diag["epochs_completed"] = report.rows.size();
    report.write(report_base.string() + ".csv", report_base.string() + ".jsonl");
    write_text(c.out / "diagnostic.json", diag.dump(2) + "\n");
    throw;
  }
  report.write(report_base.string() + ".csv", report_base.string() + ".jsonl");

  const auto ckpt = c.out / (stage == "train" ? "model.ckpt" : "finetuned.ckpt");
  save_all(*model, loaded.vocab, ckpt);

  const auto result = training::evaluate(*model, loaded.dataset, c.train.eval_beam);
  dump_captions(result, c.out);
  const auto fit = training::fit_statistics(*model, loaded.dataset);
  const int mu = c.train.epochs_train + (init ? c.train.epochs_finetune : 0);
  const auto contrast = training::contrast_statistics(*model, loaded.dataset, c.sampler, c.train, mu);
  summary["checkpoint"] = ckpt.string();
  summary["checkpoint_hash"] = file_hash(ckpt.string());
  summary["token_accuracy"] = fit.token_accuracy;
  summary["exact_match"] = fit.exact_match;
  summary["positive_cos"] = contrast.positive_cos;
  summary["negative_cos"] = contrast.negative_cos;
  summary["contrast_margin"] = contrast.margin();
  summary["bleu1"] = result.metrics.bleu1;
  summary["bleu4"] = result.metrics.bleu4;
  summary["rougeL"] = result.metrics.rouge_l;
  summary["cider"] = result.metrics.cider;
  write_text(c.out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& manifest, int beam, const std::optional<std::string>& out) {
  if (!fs::exists(ckpt)) throw ValidationError("checkpoint not found: " + ckpt);
  if (!fs::exists(manifest)) throw ValidationError("manifest not found: " + manifest);
  const auto vocab = core::Vocabulary::load(vocab_path(ckpt));
  const auto loaded = load_data(manifest, 1, &vocab);
  const auto model = load_checkpoint(ckpt);
  const auto result = training::evaluate(*model, loaded.dataset, beam);
  if (out) {
    fs::create_directories(*out);
    ordered_json snap = {{"ckpt", fs::absolute(ckpt).string()}, {"manifest", fs::absolute(manifest).string()},
                         {"beam", beam}, {"seed", model->config().seed}};
    write_text(fs::path(*out) / "config.resolved.json", snap.dump(2) + "\n");
    write_text(fs::path(*out) / "seed.txt", std::to_string(model->config().seed) + "\n");
    dump_captions(result, *out);
  }
  std::cout << metrics::to_json(result.metrics);
  return 0;
}

int run_generate(const std::string& ckpt, const std::string& manifest, const std::string& image_id,
                 const std::string& style, int beam, bool greedy, const std::optional<std::string>& out) {
  if (!fs::exists(ckpt)) throw ValidationError("checkpoint not found: " + ckpt);
  if (!fs::exists(manifest)) throw ValidationError("manifest not found: " + manifest);
  const auto vocab = core::Vocabulary::load(vocab_path(ckpt));
  const auto loaded = load_data(manifest, 1, &vocab);
  const auto model = load_checkpoint(ckpt);
  const int item = loaded.dataset.find_image(image_id);
  if (item < 0) throw ValidationError("unknown image id: " + image_id);
  int style_id = -1;
  for (int s = 0; s < loaded.dataset.num_styles(); ++s) {
    if (loaded.dataset.styles[static_cast<std::size_t>(s)] == style) style_id = s;
  }
  if (style_id < 0) {
    try {
      std::size_t used = 0;
      style_id = std::stoi(style, &used);
      if (used != style.size()) style_id = -1;
    } catch (const std::exception&) {
      style_id = -1;
    }
  }
  if (style_id < 0 || style_id >= loaded.dataset.num_styles()) throw ValidationError("unknown style: " + style);
  const auto bound = model->bind(*loaded.dataset.items[static_cast<std::size_t>(item)].features, style_id);
  const auto tokens = greedy ? bound.greedy_decode(model->config().max_len)
                             : bound.beam_search(beam, model->config().max_len);
  const auto text = loaded.dataset.text(tokens);
  if (out) {
    fs::create_directories(*out);
    ordered_json snap = {{"ckpt", fs::absolute(ckpt).string()}, {"manifest", fs::absolute(manifest).string()},
                         {"image_id", image_id}, {"style", style},
                         {"beam", beam}, {"greedy", greedy}, {"seed", model->config().seed}};
    write_text(fs::path(*out) / "config.resolved.json", snap.dump(2) + "\n");
    write_text(fs::path(*out) / "seed.txt", std::to_string(model->config().seed) + "\n");
    ordered_json cap = {{"image_id", image_id}, {"style", style}, {"caption", text}};
    write_text(fs::path(*out) / "caption.json", cap.dump(2) + "\n");
  }
  std::cout << text << "\n";
  return 0;
}

int run_score(const std::string& candidates_path, const std::string& references_path,
              const std::optional<std::string>& out) {
  const auto cj = read_json(candidates_path);
  const auto rj = read_json(references_path);
  metrics::CaptionMap candidates;
  metrics::ReferenceMap references;
  try {
    candidates = cj.get<metrics::CaptionMap>();
    references = rj.get<metrics::ReferenceMap>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("score inputs: ") + e.what());
  }
  const auto text = metrics::to_json(metrics::score_all(candidates, references));
  if (out) {
    const fs::path p(*out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, text);
  }
  std::cout << text;
  return 0;
}

int run_retrieve_debug(const RunConfig& c, const std::optional<std::string>& ckpt, int epoch,
                       const std::string& anchor_id, const std::optional<std::string>& style,
                       const std::optional<std::string>& csv_out) {
  std::optional<core::Vocabulary> vocab;
  if (ckpt) {
    if (!fs::exists(*ckpt)) throw ValidationError("checkpoint not found: " + *ckpt);
    vocab = core::Vocabulary::load(vocab_path(*ckpt));
  }
  const auto loaded = load_data(c.manifest, c.min_freq, vocab ? &*vocab : nullptr);
  std::unique_ptr<Model> model = ckpt ? load_checkpoint(*ckpt)
                                      : std::make_unique<Model>(complete_model(c.model, loaded, c.train.seed));
  int anchor = -1;
  for (std::size_t i = 0; i < loaded.dataset.size(); ++i) {
    const auto& it = loaded.dataset.items[i];
    if (it.image_id != anchor_id) continue;
    if (style && loaded.dataset.styles[static_cast<std::size_t>(it.style_id)] != *style) continue;
    anchor = static_cast<int>(i);
    break;
  }
  if (anchor < 0) throw ValidationError("no item for anchor " + anchor_id + (style ? " / " + *style : ""));
  if (epoch < 0) throw ValidationError("epoch must be >= 0");
  prepare_out(c);
  const auto cache = training::build_cache(*model, loaded.dataset, epoch);
  const auto ranked = retrieval::rank_candidates(anchor, loaded.dataset, cache, c.sampler, epoch);
  const auto csv = retrieval::to_csv(ranked, loaded.dataset);
  if (csv_out) {
    const fs::path p(*csv_out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, csv);
  }
  std::cout << csv;
  return 0;
}

int run_synth(const data::SyntheticSpec& spec, const std::string& out) {
  fs::create_directories(out);
  const auto manifest = data::generate_synthetic(spec, out);
  ordered_json snap = {{"seed", spec.seed},     {"n", spec.n_items},          {"styles", spec.n_styles},
                       {"m", spec.m},           {"d_raw", spec.d_raw},        {"vocab_size", spec.vocab_size},
                       {"noise", spec.noise},   {"out", fs::absolute(out).string()}};
  write_text(fs::path(out) / "config.resolved.json", snap.dump(2) + "\n");
  write_text(fs::path(out) / "seed.txt", std::to_string(spec.seed) + "\n");
  std::cout << "wrote " << manifest.items.size() << " images to " << out << "\n";
  return 0;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Style-aware contrastive captioning toolkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  std::optional<std::string> config_path, init, ckpt_opt, out_opt, style_opt, csv_out;
  std::string ckpt, manifest, image_id, style, anchor, candidates, references;
  int beam = 3;
  int epoch = 0;
  bool greedy = false;
  Overrides train_ov, finetune_ov, debug_ov;

  auto* train = app.add_subcommand("train", "Joint caption + contrastive training");
  train->add_option("--config", config_path, "Run config JSON");
  train_ov.attach(train);

  auto* finetune = app.add_subcommand("finetune", "Self-critical CIDEr fine-tuning");
  finetune->add_option("--config", config_path, "Run config JSON");
  finetune->add_option("--init", init, "Checkpoint to start from")->required();
  finetune_ov.attach(finetune);

  auto* eval = app.add_subcommand("eval", "Beam-search captions and metrics");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--data", manifest, "Manifest")->required();
  eval->add_option("--beam", beam, "Beam width");
  eval->add_option("--out", out_opt, "Directory for captions and metrics");

  auto* generate = app.add_subcommand("generate", "Caption one image in one style");
  generate->add_option("--ckpt", ckpt, "Checkpoint")->required();
  generate->add_option("--data", manifest, "Manifest holding the image")->required();
  generate->add_option("--image-id", image_id, "Image id")->required();
  generate->add_option("--style", style, "Style name or index")->required();
  generate->add_option("--beam", beam, "Beam width");
  generate->add_flag("--greedy", greedy, "Greedy decoding instead of beam search");
  generate->add_option("--out", out_opt, "Directory for the caption and config snapshot");

  auto* score = app.add_subcommand("score", "Score a caption file against references");
  score->add_option("--candidates", candidates, "JSON map id -> caption")->required();
  score->add_option("--references", references, "JSON map id -> [captions]")->required();
  score->add_option("--out", out_opt, "Write the metric JSON here as well");

  auto* debug = app.add_subcommand("retrieve-debug", "Dump the ranked retrieval table of one anchor");
  debug->add_option("--config", config_path, "Run config JSON");
  debug->add_option("--ckpt", ckpt_opt, "Checkpoint providing the representations");
  debug->add_option("--epoch", epoch, "Epoch index mu")->required();
  debug->add_option("--anchor", anchor, "Anchor image id")->required();
  debug->add_option("--anchor-style", style_opt, "Anchor style (default: first caption of the image)");
  debug->add_option("--csv", csv_out, "Write the table here as well");
  debug_ov.attach(debug);

  data::SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic dataset");
  synth->add_option("--seed", spec.seed, "Seed");
  synth->add_option("--n", spec.n_items, "Number of images");
  synth->add_option("--styles", spec.n_styles, "Number of styles");
  synth->add_option("--m", spec.m, "Regions per image");
  synth->add_option("--d-raw", spec.d_raw, "Raw feature width");
  synth->add_option("--vocab-size", spec.vocab_size, "Approximate vocabulary size");
  synth->add_option("--noise", spec.noise, "Feature noise standard deviation");
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  // Logs go to stderr so stdout carries only command output.
  spdlog::set_default_logger(
      std::make_shared<spdlog::logger>("saco", std::make_shared<spdlog::sinks::stderr_color_sink_mt>()));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*train) return run_training(resolve_config(config_path, train_ov), std::nullopt);
    if (*finetune) return run_training(resolve_config(config_path, finetune_ov), init);
    if (*eval) return run_eval(ckpt, manifest, beam, out_opt);
    if (*generate) return run_generate(ckpt, manifest, image_id, style, beam, greedy, out_opt);
    if (*score) return run_score(candidates, references, out_opt);
    if (*debug) return run_retrieve_debug(resolve_config(config_path, debug_ov), ckpt_opt, epoch, anchor, style_opt, csv_out);
    if (*synth) return run_synth(spec, synth_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace saco::cli
