#include <benchmark/benchmark.h>

#include <random>

#include "convseq/model.h"
#include "convseq/ops.h"
#include "convseq/training.h"

using namespace convseq;

namespace {

Tensor random(Shape shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(u(gen));
  return t;
}

// First long-term layer at full size: 50x54 pose grid, 2x7 kernel, stride 2.
void BM_Conv2dFullSizeLayer(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random({batch, 1, 50, 54}, 1), k = random({64, 1, 2, 7}, 2), b = random({64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, k, b, {{2, 2}, {0, 3}}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv2dFullSizeLayer)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_PredictSequence(benchmark::State& state, Config config) {
  const std::size_t dim = 54;
  const GeneratorConfig g = generator_config(config, dim);
  Rng rng(4);
  GeneratorParams p;
  p.long_term = init_cem(g.long_term, rng);
  p.short_term = init_cem(g.short_term, rng);
  p.decoder = init_decoder(g, rng, false);
  const Tensor seeds = random({4, config.hp.seed_length, dim}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(seeds, p, g));
}
BENCHMARK_CAPTURE(BM_PredictSequence, tiny, tiny_config())->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_PredictSequence, full_size, Config{})->Unit(benchmark::kMillisecond);

void BM_TrainStepTiny(benchmark::State& state) {
  SynthOptions o;
  o.frames = 80;
  o.trials = 1;
  std::vector<RawTrial> trials;
  for (std::size_t a = 0; a < o.actions.size(); ++a) trials.push_back({synth_trial(o, a, 0, 0), "S1", o.actions[a], 1});
  const Dataset data = make_dataset(trials, std::make_shared<NormalizationStats>(fit_stats(trials)));
  Config c = tiny_config();
  c.schedule.report_timing = false;
  Trainer t(c, data);
  for (auto _ : state) benchmark::DoNotOptimize(t.step());
}
BENCHMARK(BM_TrainStepTiny)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
