#include <benchmark/benchmark.h>

#include <vector>

#include "xtime/ewt.hpp"
#include "xtime/expert.hpp"
#include "xtime/losses.hpp"
#include "xtime/rng.hpp"
#include "xtime/router.hpp"

namespace {

using namespace xtime;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

void BM_DetectBoundaries(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(ewt::detect_boundaries(x, 4));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DetectBoundaries)->Arg(64)->Arg(128)->Arg(512)->Arg(4096);

void BM_Decompose(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto bands = static_cast<std::size_t>(state.range(1));
  const auto x = noise(n, 2);
  const auto bank = ewt::build_filter_bank_relative(ewt::detect_boundaries(x, bands), n, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(ewt::decompose(x, bank));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Decompose)->Args({128, 4})->Args({512, 4})->Args({512, 8})->Args({4096, 4});

void BM_ExpertPredict(benchmark::State& state) {
  ExpertConfig cfg;
  cfg.history = 128;
  cfg.horizon = 24;
  cfg.bands = 4;
  cfg.backbone = state.range(0) == 0 ? BackboneKind::Linear : BackboneKind::Mlp;
  const auto expert = make_expert(RarityLevel::Moderate, cfg);
  const auto x = noise(cfg.history, 3);
  for (auto _ : state) benchmark::DoNotOptimize(expert_predict(expert, x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExpertPredict)->Arg(0)->Arg(1)->ArgNames({"mlp"});

void BM_CombinedLoss(benchmark::State& state) {
  const std::size_t H = 24;
  const auto pred = noise(H, 4);
  const auto truth = noise(H, 5);
  const auto teacher = noise(H, 6);
  std::vector<RarityLevel> levels(H, RarityLevel::VeryRare);
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::combined_loss(pred, truth, std::span<const double>(teacher), levels,
                                                   RarityLevel::VeryRare, 0.5, H));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(H));
}
BENCHMARK(BM_CombinedLoss);

void BM_RouterGate(benchmark::State& state) {
  const std::size_t H = 24, E = 4;
  const auto router = Router::random(H, E, 32, 2, 7);
  ExpertOutputs outs(H, E);
  outs.values = noise(H * E, 8);
  for (auto _ : state) {
    const auto gate = gate_forward(router, outs);
    benchmark::DoNotOptimize(fuse(outs, select_topk(gate.alpha, 2)));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RouterGate);

}  // namespace

BENCHMARK_MAIN();
