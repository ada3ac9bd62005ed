#include <random>

#include <benchmark/benchmark.h>

#include "cgdt/diff/ops.hpp"
#include "cgdt/envs/env.hpp"
#include "cgdt/eval/rollout.hpp"
#include "cgdt/train/trainer.hpp"

using namespace cgdt;

namespace {

diff::Tensor random_tensor(diff::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(diff::numel(shape));
  for (auto& x : v) x = n(rng);
  return diff::Tensor::from(std::move(shape), std::move(v), true);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1);
  const auto b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(diff::matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto a = random_tensor({256, 64}, 1);
  const auto b = random_tensor({64, 192}, 2);
  for (auto _ : state) {
    diff::Tape tape;
    diff::Tape::Scope scope(tape);
    tape.backward(diff::sum(diff::matmul(a, b)));
  }
}
BENCHMARK(BM_MatmulBackward);

void BM_Attention(benchmark::State& state) {
  // B=256 windows, 2 heads, K=6 tokens (two timesteps of three tokens), 32 dims per head.
  const auto q = random_tensor({256, 2, 6, 32}, 3);
  const auto k = random_tensor({256, 2, 6, 32}, 4);
  const auto v = random_tensor({256, 2, 6, 32}, 5);
  for (auto _ : state) {
    const auto scores = diff::mul_scalar(diff::matmul(q, diff::transpose_last2(k)), 1.0 / std::sqrt(32.0));
    benchmark::DoNotOptimize(diff::matmul(diff::softmax(scores), v).data().data());
  }
}
BENCHMARK(BM_Attention);

train::TrainConfig bench_config(std::int64_t iterations) {
  train::TrainConfig c;
  c.critic_iterations = iterations;
  c.policy_iterations = iterations;
  c.eval_interval = iterations;
  return c;
}

void BM_CriticTrainStep(benchmark::State& state) {
  const auto data = envs::generate_dataset(envs::EnvSpec::bernoulli_bandit(0.2), {}, 2000, 0);
  const auto cfg = bench_config(10);
  for (auto _ : state) benchmark::DoNotOptimize(train::train_critic(data, cfg).record.steps_run);
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_CriticTrainStep)->Unit(benchmark::kMillisecond);

void BM_PolicyTrainStep(benchmark::State& state) {
  const auto data = envs::generate_dataset(envs::EnvSpec::bernoulli_bandit(0.2), {}, 2000, 0);
  const auto cfg = bench_config(10);
  const auto critic = train::train_critic(data, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(train::train_policy(data, critic.critic, cfg).record.steps_run);
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_PolicyTrainStep)->Unit(benchmark::kMillisecond);

void BM_Rollout(benchmark::State& state) {
  const auto env = envs::EnvSpec::stitch_chain();
  auto cfg = models::TransformerConfig::desk();
  cfg.context_length = 2;
  const models::DecisionTransformer policy(cfg, env.state_dim(), env.action_space(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(eval::rollout(policy, env, 1.0, 1000, 0).returns.data());
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Rollout)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
