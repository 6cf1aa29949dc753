#include <benchmark/benchmark.h>

#include <numeric>

#include "hwm/data/split.hpp"
#include "hwm/eval/metrics.hpp"
#include "hwm/nn/graph.hpp"
#include "hwm/nn/ops.hpp"
#include "hwm/train/trainer.hpp"
#include "hwm/trust/step_doubling.hpp"

using namespace hwm;

namespace {

data::TrajectorySpec first_spec(env::EnvId id) {
  return data::sample_params(data::split_spec(data::desk_config(id), data::Split::Train), 0);
}

env::EnvParams desk_solver(env::EnvId id) { return first_spec(id).params; }

/// A state a few frames in, past the stiff transient of the Oregonator initial condition.
env::State initial_state(env::EnvId id) {
  return data::generate_trajectory(first_spec(id), 11).frames[10];
}

train::NeuralSurrogate untrained(env::EnvId id) {
  const auto s = initial_state(id);
  const std::size_t c = s.dim(0);
  data::NormStats norm{std::vector<double>(c, 0.0), std::vector<double>(c, 1.0), {}};
  const std::size_t grid = s.rank() == 3 ? s.dim(1) : 1;
  return train::NeuralSurrogate(nn::Network<float>(train::default_architecture(id, grid), 1), norm,
                                {1, 2, 4, 8, 16, 32, 64});
}

constexpr env::EnvId kEnvs[] = {env::EnvId::Oregonator, env::EnvId::Euler, env::EnvId::Ball};

}  // namespace

// Reference solver cost per frame count: expected linear in the horizon.
static void BM_SolverAdvance(benchmark::State& st) {
  const auto id = kEnvs[st.range(0)];
  const auto p = desk_solver(id);
  const auto s = initial_state(id);
  const int T = static_cast<int>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(env::advance(p, s, T));
  st.SetLabel(env::to_string(id));
}
BENCHMARK(BM_SolverAdvance)->ArgsProduct({{0, 1, 2}, {2, 8, 64}})->Unit(benchmark::kMillisecond);

// Surrogate forward: one pass whatever the horizon.
static void BM_SurrogateForward(benchmark::State& st) {
  const auto id = kEnvs[st.range(0)];
  auto model = untrained(id);
  const auto s = initial_state(id);
  const int T = static_cast<int>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(model.predict(s, T));
  st.SetLabel(env::to_string(id));
}
BENCHMARK(BM_SurrogateForward)->ArgsProduct({{0, 1, 2}, {2, 64}})->Unit(benchmark::kMillisecond);

static void BM_SurrogateBatch(benchmark::State& st) {
  auto model = untrained(env::EnvId::Ball);
  const std::vector<env::State> states(static_cast<std::size_t>(st.range(0)), initial_state(env::EnvId::Ball));
  const std::vector<int> hs(states.size(), 8);
  for (auto _ : st) benchmark::DoNotOptimize(model.predict(states, hs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_SurrogateBatch)->Arg(1)->Arg(32)->Arg(256);

static void BM_StepDoubling(benchmark::State& st) {
  const auto id = kEnvs[st.range(0)];
  auto model = untrained(id);
  const auto s = initial_state(id);
  for (auto _ : st) benchmark::DoNotOptimize(trust::step_doubling(model, model.norm(), s, 8));
  st.SetLabel(env::to_string(id));
}
BENCHMARK(BM_StepDoubling)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

// One optimiser step of the U-Net on a batch of 8 (forward + backward).
static void BM_UNetTrainStep(benchmark::State& st) {
  const auto arch = train::default_architecture(env::EnvId::Euler, 64);
  nn::Network<float> net(arch, 1);
  nn::Tensor<float> x(nn::Shape{8, 4, 64, 64}, 0.1f);
  const std::vector<int> hs(8, 4);
  for (auto _ : st) {
    nn::Graph<float> g;
    auto y = net.forward(g, g.input(x), hs);
    auto loss = nn::mean(nn::mul(y, y));
    g.backward(loss);
    benchmark::DoNotOptimize(net.params());
  }
}
BENCHMARK(BM_UNetTrainStep)->Unit(benchmark::kMillisecond);

static void BM_Auroc(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  Rng rng(1);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 4 == 0);
    s[i] = rng.normal() + y[i];
  }
  for (auto _ : st) benchmark::DoNotOptimize(eval::auroc(s, y));
}
BENCHMARK(BM_Auroc)->Arg(100)->Arg(10000);

static void BM_BootstrapCi(benchmark::State& st) {
  Rng rng(2);
  std::vector<double> s(100);
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    y[i] = static_cast<int>(i % 4 == 0);
    s[i] = rng.normal() + y[i];
  }
  for (auto _ : st) benchmark::DoNotOptimize(eval::bootstrap_ci(s, y, 1000, 0.95, 3));
}
BENCHMARK(BM_BootstrapCi)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
