// SPDX-License-Identifier: Apache-2.0
#include "iotsched/iotsched.hpp"

#include <benchmark/benchmark.h>

using namespace iotsched;

namespace {

Realization tiny_realization(bool fading)
{
    RunConfig c = preset("tiny");
    c.fading = fading;
    return make_realization(c, Split::Test, 0);
}

void BM_MlpForward(benchmark::State& state)
{
    Rng rng(1);
    const nn::MlpParams p = nn::MlpParams::glorot(nn::standard_dims(9, 10), rng);
    const Eigen::VectorXd x = Eigen::VectorXd::Random(9);
    for (auto _ : state) {
        benchmark::DoNotOptimize(nn::forward(p, x));
    }
}
BENCHMARK(BM_MlpForward);

void BM_MlpBackwardBatch(benchmark::State& state)
{
    Rng rng(2);
    const nn::MlpParams p = nn::MlpParams::glorot(nn::standard_dims(9, 10), rng);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(9, state.range(0));
    const Eigen::MatrixXd up = Eigen::MatrixXd::Random(10, state.range(0));
    for (auto _ : state) {
        nn::ForwardCache cache;
        nn::forward_batch(p, x, &cache);
        benchmark::DoNotOptimize(nn::backward(p, cache, up));
    }
}
BENCHMARK(BM_MlpBackwardBatch)->Arg(1)->Arg(12)->Arg(500);

void BM_SolveTinySlot(benchmark::State& state)
{
    const Realization r = tiny_realization(false);
    const McsCatalog cat = default_mcs_catalog();
    const TransformedProblem p = build_transformed(r, 0, 3, cat);
    SolverOptions opt;
    opt.starts = 2;
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_local(p, opt, cat));
    }
}
BENCHMARK(BM_SolveTinySlot)->Unit(benchmark::kMillisecond);

void BM_EpisodeStep(benchmark::State& state)
{
    RunConfig c = preset("tiny");
    c.scheduler = static_cast<SchedulerKind>(state.range(0));
    const Realization r = tiny_realization(true);
    const ScAssignment a = round_robin_assign(r, c.sc_count);
    DrlConfig dc;
    dc.algorithm = algorithm_of(c.scheduler);
    dc.mode = action_mode_of(c.scheduler);
    dc.num_cells = c.cells;
    dc.num_sc = c.sc_count;
    DrlScheduler sched(dc);
    const Realization warm[] = {r};
    const ScAssignment warm_a[] = {a};
    sched.fit_scalers(warm, warm_a);
    for (auto _ : state) {
        state.PauseTiming();
        DrlScheduler scratch = sched;
        EpisodeRunner run(scratch, &scratch, r, a);
        state.ResumeTiming();
        while (!run.done()) {
            benchmark::DoNotOptimize(run.step());
        }
    }
    state.SetLabel(std::string(to_string(c.scheduler)));
}
BENCHMARK(BM_EpisodeStep)
    ->Arg(static_cast<int>(SchedulerKind::DqnIa))
    ->Arg(static_cast<int>(SchedulerKind::PgnIa))
    ->Arg(static_cast<int>(SchedulerKind::DdpgnIa));

} // namespace
BENCHMARK_MAIN();
