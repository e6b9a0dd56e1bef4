#include <random>

#include <benchmark/benchmark.h>

#include <cap/cap.h>

namespace {

const cap::SyntheticInstance& suite() {
  static const cap::SyntheticInstance inst = cap::generate_instance(cap::standard_suite_spec(0));
  return inst;
}

void BM_TopK(benchmark::State& state) {
  const auto& bank = suite().train;
  const cap::Vector q = suite().test.features.row(0);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cap::top_k_neighbors(bank, q, k));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bank.size()));
}
BENCHMARK(BM_TopK)->Arg(1)->Arg(32)->Arg(64);

void BM_Gradients(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(1.0, 0.5);
  const auto random = [&](Eigen::Index r, Eigen::Index c) {
    cap::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  const auto de = static_cast<Eigen::Index>(d);
  std::vector<cap::TrainingSample> batch;
  for (int i = 0; i < 64; ++i) batch.push_back({random(1, de).row(0).transpose(), random(static_cast<Eigen::Index>(k), de)});
  const cap::ModelParams model = cap::init_model(d, cap::HeadVariant::Linear, true, 0);
  const cap::ObjectiveOptions opts{2.0, false};
  for (auto _ : state) benchmark::DoNotOptimize(cap::gradients(model, batch, opts, 1));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Gradients)->Args({64, 32})->Args({256, 32})->Args({64, 4});

void BM_Evaluate(benchmark::State& state) {
  const auto& inst = suite();
  const cap::ModelParams model = cap::init_model(inst.train.dim(), cap::HeadVariant::Linear, true, 0);
  for (auto _ : state) benchmark::DoNotOptimize(cap::evaluate(model, inst.train, inst.test, 32, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(inst.test.features.size()));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
