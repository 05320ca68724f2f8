// OpenMP batch kernels against their serial references.
//   ./kpc_bench --benchmark_filter=Score

#include <benchmark/benchmark.h>

#include <random>

#include "kpc/eval.hpp"
#include "oracles.hpp"

namespace {

struct Corpus {
  std::vector<kpc::SemanticModel> gold, pred;
  std::set<std::string> attrs;
  std::vector<kpc::ScoreJob> score_jobs;
  std::vector<kpc::PruneJob> prune_jobs;

  explicit Corpus(std::size_t n) {
    std::mt19937_64 rng(2023);
    const oracle::RandomModelSpec spec{5, 3, 10, 4, 0.8, 0.15};
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(oracle::random_model(rng, spec));
      pred.push_back(oracle::perturb(gold.back(), rng, spec));
    }
    for (int a = 0; a < 10; a += 2) attrs.insert(oracle::attr_name(a));
    for (std::size_t i = 0; i < n; ++i) {
      score_jobs.push_back({&gold[i], &pred[i], kpc::EvalStep::Modeling});
      prune_jobs.push_back({&pred[i], &attrs});
    }
  }
};

const Corpus& corpus(std::size_t n) {
  static std::map<std::size_t, Corpus> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Corpus(n)).first;
  return it->second;
}

void BM_ScoreSerial(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kpc::score_batch_serial(c.score_jobs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScoreParallel(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kpc::score_batch(c.score_jobs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PruneSerial(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kpc::prune_batch_serial(c.prune_jobs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PruneParallel(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kpc::prune_batch(c.prune_jobs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ScoreSerial)->Arg(64)->Arg(512)->UseRealTime();
BENCHMARK(BM_ScoreParallel)->Arg(64)->Arg(512)->UseRealTime();
BENCHMARK(BM_PruneSerial)->Arg(64)->Arg(512)->UseRealTime();
BENCHMARK(BM_PruneParallel)->Arg(64)->Arg(512)->UseRealTime();

BENCHMARK_MAIN();
