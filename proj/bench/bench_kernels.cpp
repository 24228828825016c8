// Serial vs OpenMP timings of the batch kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "onion/kernels.hpp"
#include "onion/lm.hpp"
#include "onion/rng.hpp"
#include "onion/textcore.hpp"

namespace {

using namespace onion;

struct Fixture {
  lm::NGramLm lm;
  std::vector<text::Sentence> batch;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Rng rng(7);
    const text::SynthParams params{2, 500, 20, 6, 12};
    const auto train = text::synth_corpus(rng, params);
    const auto test = text::synth_corpus(rng, text::SynthParams{2, 200, 20, 6, 12}, text::Split::test);
    return Fixture{lm::NGramLm::train(train), kernels::sentences_of(test)};
  }();
  return f;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_Perplexities(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::perplexities(f.lm, f.batch, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.batch.size()));
}

void BM_Profiles(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::profiles(f.lm, f.batch, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.batch.size()));
}

void BM_Sanitize(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::sanitize(f.lm, 0.0, f.batch, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.batch.size()));
}

}  // namespace

BENCHMARK(BM_Perplexities)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Profiles)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Sanitize)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
