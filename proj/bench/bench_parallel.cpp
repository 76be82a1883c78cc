// Serial reference vs OpenMP kernels on the synthetic fixture.
#include <filesystem>
#include <memory>

#include <benchmark/benchmark.h>

#include "saco/core/vocab.hpp"
#include "saco/data.hpp"
#include "saco/metrics.hpp"
#include "saco/model.hpp"
#include "saco/retrieval.hpp"
#include "saco/training.hpp"

using namespace saco;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path dir;
  core::Vocabulary vocab;
  core::Dataset dataset;
  std::unique_ptr<Model> model;
  retrieval::SamplerConfig sampler;
  training::TrainConfig train;
  retrieval::RepresentationCache cache;
  std::vector<training::AnchorSample> samples;
  metrics::CaptionMap candidates;
  metrics::ReferenceMap references;

  Fixture() {
    dir = fs::temp_directory_path() / "saco_bench_fixture";
    fs::remove_all(dir);
    data::SyntheticSpec spec;
    spec.n_items = 64;
    const auto manifest = data::generate_synthetic(spec, dir);
    vocab = core::build_vocab(data::caption_corpus(manifest), 1);
    dataset = data::build_dataset(manifest, vocab);
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.d_h = 32;
    model = std::make_unique<Model>(mc);
    sampler.num_negatives = 4;
    cache = training::build_cache(*model, dataset, 3);
    samples = training::draw_samples(dataset, cache, sampler, train, 3);
    // Captions scored against the other captions of the same (image, style).
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& it = dataset.items[i];
      const auto key = std::to_string(i);
      candidates[key] = it.caption_text;
      references[key] = dataset.references(it.image_index, (it.style_id + 1) % dataset.num_styles());
      if (references[key].empty()) references[key] = {it.caption_text};
    }
  }
  ~Fixture() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::kSerial : Exec::kParallel; }

void BM_BatchGradient(benchmark::State& state) {
  auto& f = fixture();
  training::Trainer trainer(*f.model, f.dataset, f.train, f.sampler, exec_of(state));
  std::vector<int> anchors(16);
  for (int i = 0; i < 16; ++i) anchors[static_cast<std::size_t>(i)] = i;
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_gradient(anchors, f.samples));
}

void BM_RankAll(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(retrieval::rank_all(f.dataset, f.cache, f.sampler, 3, exec_of(state)));
}

void BM_BuildCache(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(training::build_cache(*f.model, f.dataset, 3, exec_of(state)));
}

void BM_CiderPerItem(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(metrics::cider_per_item(f.candidates, f.references, exec_of(state)));
}

}  // namespace

// Argument 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_BatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RankAll)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildCache)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CiderPerItem)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
