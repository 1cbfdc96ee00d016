#include <benchmark/benchmark.h>

#include "lsed/ops.hpp"
#include "lsed/pipeline.hpp"
#include "lsed/synth.hpp"
#include "lsed/train.hpp"

namespace {

using namespace lsed;

const audio::AnnotatedRecording& recording() {
  static const auto rec = synth::synthesize_recording(1, synth::corpus_scenario(1, 15.0), "bench");
  return rec;
}

void BM_Featurize15s(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::featurize(recording().clip, "bench"));
}
BENCHMARK(BM_Featurize15s)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto windows = pipeline::featurize(recording().clip, "bench");
  model::ModelConfig cfg;
  const auto m = model::MultiBranchTCN::init(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(windows));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(windows.size()));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

// One Adam step on a batch of `range(0)` windows with the default model.
void BM_TrainStep(benchmark::State& state) {
  auto windows = pipeline::featurize(recording().clip, "bench");
  const auto batch = static_cast<std::size_t>(state.range(0));
  while (windows.size() < batch) windows.push_back(windows[windows.size() % 29]);
  windows.resize(batch);
  auto m = model::MultiBranchTCN::init({});
  std::vector<ad::Tensor*> params;
  for (auto& [name, t] : m.named_parameters()) params.push_back(t);
  train::AdamState adam;
  const ad::Tensor targets({batch}, 1.0);
  for (auto _ : state) {
    ad::Tape tape;
    const auto tr = m.trace(tape, tape.constant(model::stack_windows(windows)), true);
    const auto loss = ad::bce(tr.probs, tape.constant(targets));
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    for (const auto& p : tr.params) grads.push_back(tape.grad(p));
    train::adam_step(params, grads, adam, 1e-5);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
