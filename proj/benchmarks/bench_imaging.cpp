#include <benchmark/benchmark.h>

#include "leuko/augment.hpp"
#include "leuko/dicom.hpp"
#include "leuko/phantom.hpp"
#include "leuko/preprocess.hpp"
#include "leuko/random.hpp"
#include "leuko/volume_prep.hpp"

namespace {

leuko::UnitSlice random_slice(std::size_t size, std::uint64_t seed) {
  leuko::Rng rng(seed);
  leuko::UnitSlice s(size, size);
  for (double& v : s.values()) v = rng.uniform();
  return s;
}

void BM_ResizeTo256(benchmark::State& state) {
  const auto slice = random_slice(512, 3);
  for (auto _ : state) benchmark::DoNotOptimize(leuko::resize_slice(slice, {}).values().data());
}
BENCHMARK(BM_ResizeTo256)->Unit(benchmark::kMicrosecond);

void BM_Variant(benchmark::State& state) {
  const auto slice = random_slice(256, 4);
  const auto variant = static_cast<leuko::Variant>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(leuko::apply_variant(slice, variant).values().data());
}
BENCHMARK(BM_Variant)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_Rotate(benchmark::State& state) {
  const auto slice = random_slice(64, 5);
  for (auto _ : state) benchmark::DoNotOptimize(leuko::rotate(slice, 7.5).values().data());
}
BENCHMARK(BM_Rotate)->Unit(benchmark::kMicrosecond);

void BM_DicomRoundTrip(benchmark::State& state) {
  leuko::PhantomConfig cfg;
  cfg.slices_per_patient = 3;
  const auto slice = leuko::gen_phantom_patient(cfg, 1, 0).record.slices[1];
  for (auto _ : state) {
    const auto bytes = leuko::write_dicom(slice);
    benchmark::DoNotOptimize(leuko::parse_dicom(bytes).raw_pixels.data());
  }
}
BENCHMARK(BM_DicomRoundTrip)->Unit(benchmark::kMicrosecond);

void BM_PhantomPatient(benchmark::State& state) {
  leuko::PhantomConfig cfg;
  std::size_t index = 0;
  for (auto _ : state) benchmark::DoNotOptimize(leuko::gen_phantom_patient(cfg, 1, index++).record.slices.data());
}
BENCHMARK(BM_PhantomPatient)->Unit(benchmark::kMillisecond);

}  // namespace
