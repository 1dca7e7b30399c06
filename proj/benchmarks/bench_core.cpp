#include <benchmark/benchmark.h>

#include "icl/inference.hpp"
#include "icl/trainer.hpp"

using namespace icl;

namespace {

struct Setup {
  Dictionary dict;
  LossContext ctx;
  Params params;
  AttentionState state;
  Delta residual;
};

Setup make_setup(int K, int d, int N, int m, int H) {
  ProblemConfig cfg{K, d, N, m, 0.05, 7};
  Setup s{gen_dictionary(cfg), {}, {}, {}, {}};
  s.ctx = build_context(s.dict, m, cfg.tau);
  s.params = init_params(H, d, K, 1.0, 11);
  Rng rng = derive_rng(11, "bench.w");
  for (int h = 0; h < H; ++h)
    for (int k = 0; k < K; ++k) s.params.w(h, k) = 0.3 * rng.normal();
  s.state = attention_state(s.params, s.dict, s.ctx.zbar);
  s.residual = delta(s.ctx, a_hat(s.params, s.state));
  return s;
}

void BM_BuildContext(benchmark::State& state) {
  const int K = int(state.range(0));
  ProblemConfig cfg{K, 20, K / 3, 8, 0.05, 7};
  const Dictionary dict = gen_dictionary(cfg);
  for (auto _ : state) {
    LossContext ctx = build_context(dict, cfg.m, cfg.tau);
    benchmark::DoNotOptimize(ctx.lstar);
  }
}
BENCHMARK(BM_BuildContext)->Arg(24)->Arg(60)->Arg(200);

void BM_AttentionState(benchmark::State& state) {
  Setup s = make_setup(int(state.range(0)), 20, int(state.range(0)) / 3, 8, 16);
  for (auto _ : state) {
    attention_state_into(s.params, s.dict, s.ctx.zbar, s.state);
    benchmark::DoNotOptimize(s.state.c.front()(0, 0));
  }
}
BENCHMARK(BM_AttentionState)->Arg(24)->Arg(60)->Arg(200);

void BM_LossAndGradients(benchmark::State& state) {
  Setup s = make_setup(int(state.range(0)), 20, int(state.range(0)) / 3, 8, 16);
  for (auto _ : state) {
    const Matrix gw = grad_w(s.ctx, s.state, s.residual);
    const auto gq = grad_q(s.ctx, s.state, s.residual, s.params);
    benchmark::DoNotOptimize(gw(0, 0));
    benchmark::DoNotOptimize(gq.front()(0, 0));
  }
}
BENCHMARK(BM_LossAndGradients)->Arg(24)->Arg(60)->Arg(200);

void BM_TrainSteps(benchmark::State& state) {
  Setup s = make_setup(8, 4, 4, 2, 6);
  const Params p0 = init_params(6, 4, 8, 1.0, 3);
  TrainerConfig tc;
  tc.lr_mode = LrMode::Manual;
  tc.eta_q = 1e-4;
  tc.eta_w = 1e-2;
  tc.T = 1000;
  tc.log_every = 1000;
  for (auto _ : state) {
    TrainReport rep = train(p0, s.ctx, s.dict, tc);
    benchmark::DoNotOptimize(rep.deltas.back());
  }
  state.SetItemsProcessed(state.iterations() * tc.T);
}
BENCHMARK(BM_TrainSteps);

void BM_Ridge(benchmark::State& state) {
  Setup s = make_setup(200, 20, 60, 8, 4);
  const PromptInstance p =
      sample_prompt(s.dict, LambdaDist::standard_gaussian(), 0.05, 9);
  const Vector y = p.labels_prompt();
  for (auto _ : state) {
    Vector lam = ridge(s.ctx.z, y, double(s.ctx.m) * s.ctx.tau);
    benchmark::DoNotOptimize(lam[0]);
  }
}
BENCHMARK(BM_Ridge);

void BM_McLoss(benchmark::State& state) {
  Setup s = make_setup(40, 20, 12, 8, 16);
  for (auto _ : state) {
    McLoss mc = mc_loss(s.params, s.dict, LambdaDist::standard_gaussian(), 0.05,
                        state.range(0), 17);
    benchmark::DoNotOptimize(mc.estimate);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_McLoss)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
