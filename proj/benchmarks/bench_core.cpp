#include <benchmark/benchmark.h>

#include "pvolab/approx.hpp"
#include "pvolab/expert.hpp"
#include "pvolab/gridworld.hpp"
#include "pvolab/pvo.hpp"
#include "pvolab/rl.hpp"
#include "pvolab/rng.hpp"

using namespace pvolab;

namespace {

void BM_GenerateMaze(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    std::uint32_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(Maze::generate(seed++, size, size, MazeStyle::Obstacles));
}
BENCHMARK(BM_GenerateMaze)->Arg(6)->Arg(10)->Arg(12);

void BM_AstarSolve(benchmark::State& state) {
    const Maze maze =
        Maze::generate(7, static_cast<int>(state.range(0)),
                       static_cast<int>(state.range(0)), MazeStyle::Obstacles);
    for (auto _ : state) benchmark::DoNotOptimize(astar_solve(maze));
}
BENCHMARK(BM_AstarSolve)->Arg(8)->Arg(12);

void BM_EncodeObservation(benchmark::State& state) {
    const Maze maze = Maze::generate(7, 10, 10, MazeStyle::Obstacles);
    for (auto _ : state) benchmark::DoNotOptimize(encode_observation(maze));
}
BENCHMARK(BM_EncodeObservation);

void BM_MlpForward(benchmark::State& state) {
    const MlpFn net(value_net_layer_sizes(kDefaultCanvas, 1), 1);
    const Observation obs =
        encode_observation(Maze::generate(3, 10, 10, MazeStyle::Obstacles));
    const auto input = obs.as_doubles();
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(input));
}
BENCHMARK(BM_MlpForward);

void BM_MlpGradStep(benchmark::State& state) {
    MlpFn net(value_net_layer_sizes(kDefaultCanvas, 1), 1);
    Rng rng(5);
    Minibatch batch;
    for (int i = 0; i < 32; ++i) {
        const Observation obs = encode_observation(
            Maze::generate(rng.next_u32(), 8, 8, MazeStyle::Obstacles));
        const double target = rng.unit();
        batch.add(obs, std::span<const double>(&target, 1));
    }
    for (auto _ : state) benchmark::DoNotOptimize(net.grad_step(batch, 1e-3));
}
BENCHMARK(BM_MlpGradStep);

void BM_TabularUpdate(benchmark::State& state) {
    TabularFn table(4);
    const Observation obs =
        encode_observation(Maze::generate(9, 8, 8, MazeStyle::Obstacles));
    for (auto _ : state) table.td_update(obs, 1, 0.5, 0.2);
}
BENCHMARK(BM_TabularUpdate);

void BM_ValueIteration(benchmark::State& state) {
    const Maze maze =
        Maze::generate(11, static_cast<int>(state.range(0)),
                       static_cast<int>(state.range(0)), MazeStyle::Obstacles);
    for (auto _ : state) benchmark::DoNotOptimize(value_iteration_oracle(maze, 0.99));
}
BENCHMARK(BM_ValueIteration)->Arg(6)->Arg(10);

} // namespace

BENCHMARK_MAIN();
