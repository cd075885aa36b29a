#include <benchmark/benchmark.h>

#include "leuko/random.hpp"
#include "leuko/tinycnn.hpp"

namespace {

std::vector<leuko::UnitSlice> random_slices(std::size_t n, std::size_t size, std::uint64_t seed) {
  leuko::Rng rng(seed);
  std::vector<leuko::UnitSlice> out;
  for (std::size_t i = 0; i < n; ++i) {
    leuko::UnitSlice s(size, size);
    for (double& v : s.values()) v = rng.uniform();
    out.push_back(std::move(s));
  }
  return out;
}

void BM_Forward(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  const auto model = leuko::CnnModel::glorot({}, 1);
  const auto batch = leuko::make_batch(random_slices(batch_size, 64, 2), 3);
  for (auto _ : state) {
    auto cache = leuko::forward(model, batch);
    benchmark::DoNotOptimize(cache.logits.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  const auto model = leuko::CnnModel::glorot({}, 1);
  const auto batch = leuko::make_batch(random_slices(batch_size, 64, 2), 3);
  const std::vector<double> labels(batch_size, 1.0);
  for (auto _ : state) {
    const auto cache = leuko::forward(model, batch);
    auto grads = leuko::backward(model, cache, labels);
    benchmark::DoNotOptimize(grads.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(4)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  auto model = leuko::CnnModel::glorot({}, 1);
  const std::vector<double> grads(model.parameters().size(), 1e-3);
  leuko::AdamState adam(grads.size());
  std::int64_t step = 0;
  for (auto _ : state) {
    leuko::adam_step(model.parameters(), grads, adam, ++step, {});
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_AdamStep);

}  // namespace
