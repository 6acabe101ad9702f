// Serial reference against the OpenMP policy for each parallel kernel.
// Arg 0 is Exec::Serial, arg 1 is Exec::Parallel.

#include <benchmark/benchmark.h>

#include "vrkn/eval.hpp"
#include "vrkn/tasks.hpp"
#include "vrkn/toy.hpp"
#include "vrkn/vrkn.hpp"

using namespace vrkn;

namespace {

Exec policy(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

const toy::ToyDataset& toy_data() {
  static const toy::ToyDataset data = toy::generate_toy_data(1, {200, 50, 0}, Exec::Serial);
  return data;
}

const tasks::Dataset& pendulum() {
  static const tasks::Dataset ds = [] {
    tasks::TaskSpec spec = tasks::default_spec(tasks::System::Pendulum);
    spec.missing.kind = tasks::MissingSchedule::Kind::EveryNth;
    return tasks::generate(spec, 32, 100, tasks::Policy::Random, Exec::Serial);
  }();
  return ds;
}

void BM_infer_batch(benchmark::State& state) {
  const LgssmParams gt = toy_ground_truth();
  for (auto _ : state) benchmark::DoNotOptimize(infer_batch(gt, toy_data().train, policy(state)));
}

void BM_ssm_cf_gradient(benchmark::State& state) {
  toy::Dynamics dyn{toy_ground_truth().trans_mat, 0.5};
  std::vector<const Trajectory*> batch;
  for (const Trajectory& tr : toy_data().train) batch.push_back(&tr);
  for (auto _ : state) benchmark::DoNotOptimize(toy::ssm_cf_gradient(dyn, batch, policy(state)));
}

void BM_generate_pendulum(benchmark::State& state) {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::Pendulum);
  for (auto _ : state) benchmark::DoNotOptimize(tasks::generate(spec, 32, 100, tasks::Policy::Random, policy(state)));
}

void BM_latent_beliefs(benchmark::State& state) {
  model::VrknConfig cfg;
  cfg.latent_dim = 16;
  cfg.hidden_width = 32;
  const model::Vrkn m(model::config_for(pendulum().seqs, cfg), 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(eval::latent_beliefs(m, pendulum().seqs, eval::BeliefKind::Smoothed, policy(state)));
}

}  // namespace

BENCHMARK(BM_infer_batch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ssm_cf_gradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_generate_pendulum)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_latent_beliefs)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
