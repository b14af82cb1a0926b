#include <benchmark/benchmark.h>

#include <vector>

#include "transcoder/autodiff/adam.hpp"
#include "transcoder/autodiff/ops.hpp"
#include "transcoder/model/backbone.hpp"
#include "transcoder/model/prefix.hpp"
#include "transcoder/model/transformer.hpp"
#include "transcoder/train/sampling.hpp"
#include "transcoder/util/allocator.hpp"

using namespace transcoder;

namespace {

ad::DiffTensor<float> random_tensor(util::Rng& rng, ad::Shape shape, bool grad) {
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return ad::DiffTensor<float>::from(std::move(shape), v, grad);
}

model::TokenBatch random_batch(const model::ModelConfig& c, std::size_t batch, std::size_t len, util::Rng& rng) {
  std::vector<std::vector<TokenId>> sources(batch);
  std::vector<std::vector<TokenId>> targets(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    targets[b].push_back(kBosId);
    for (std::size_t i = 0; i < len; ++i) {
      sources[b].push_back(static_cast<TokenId>(6 + rng.below(c.vocab_size - 6)));
      targets[b].push_back(static_cast<TokenId>(6 + rng.below(c.vocab_size - 6)));
    }
    targets[b].push_back(kEosId);
  }
  return model::make_batch(sources, targets);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto rng = util::Rng::stream(1, "bench");
  const auto a = random_tensor(rng, {n, n}, true);
  const auto b = random_tensor(rng, {n, n}, true);
  for (auto _ : state) {
    ad::Tape<float> tape;
    auto y = ad::matmul(tape, a, b);
    tape.backward(ad::sum(tape, y));
    benchmark::DoNotOptimize(a.grad().data());
    a.clear_grad();
    b.clear_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(3 * 2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

void BM_AttentionWithPrefix(benchmark::State& state) {
  const auto prefix_len = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kBatch = 16, kLen = 24, kD = 64, kHeads = 4;
  auto rng = util::Rng::stream(2, "bench");
  const auto q = random_tensor(rng, {kBatch * kLen, kD}, true);
  const auto k = random_tensor(rng, {kBatch * kLen, kD}, true);
  const auto v = random_tensor(rng, {kBatch * kLen, kD}, true);
  model::SitePrefix<float> site{random_tensor(rng, {prefix_len, kD}, true), random_tensor(rng, {prefix_len, kD}, true)};
  model::AttentionMask mask;
  mask.batch = kBatch;
  mask.query_len = kLen;
  mask.key_len = kLen;
  mask.causal = true;
  for (auto _ : state) {
    ad::Tape<float> tape(false);
    auto r = model::attention_with_prefix(tape, q, k, v, prefix_len ? &site : nullptr, mask, kHeads);
    benchmark::DoNotOptimize(r.output.data().data());
  }
}
BENCHMARK(BM_AttentionWithPrefix)->Arg(0)->Arg(8)->Arg(32);

// One Adam step of backbone + prefix on the default model.
void BM_TrainStep(benchmark::State& state) {
  model::ModelConfig c;
  c.dropout_rate = 0.1;
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  const auto backbone = model::Backbone<float>::init(c, 1);
  const auto prefix = model::PrefixBank<float>::init(c, 2, true);
  ad::Adam<float> opt({1e-4});
  for (const auto& p : backbone.parameters()) opt.add_parameter(p.tensor);
  for (const auto& p : prefix.parameters()) opt.add_parameter(p.tensor);
  auto rng = util::Rng::stream(3, "bench");
  const auto batch = random_batch(c, batch_size, 22, rng);
  for (auto _ : state) {
    ad::Tape<float> tape;
    model::ForwardOptions options{true, &rng};
    auto loss = model::sequence_loss(tape, backbone, &prefix, batch, options);
    tape.backward(loss);
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_SamplerDraw(benchmark::State& state) {
  train::SamplerState sampler({"a", "b", "c"}, {167288, 24927, 1200}, 1.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.draw());
}
BENCHMARK(BM_SamplerDraw);

}  // namespace

int main(int argc, char** argv) {
  util::configure_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
