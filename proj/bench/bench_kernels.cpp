// Serial reference vs OpenMP Schur-complement kernel on the engine SDP.
#include <benchmark/benchmark.h>

#include <random>

#include "lpvsd/engine_afr.hpp"
#include "lpvsd/sdp_kernels.hpp"
#include "lpvsd/synthesis.hpp"

using namespace lpvsd;
using namespace lpvsd::sdp;

namespace {

struct Fixture {
  synthesis::BuiltSdp built;
  std::vector<kernels::BlockTerms> blocks;
  std::vector<Matrix> z, s_inv;

  Fixture()
      : built(synthesis::build_sdp(plant(), make_grid(plant().schedule, {5}),
                                   synthesis::SynthesisOptions{}, synthesis::Lambdas{1, 1, 1, 0})) {
    blocks = kernels::collect_block_terms(built.problem);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    auto spd = [&](int d) {
      Matrix a = Matrix::NullaryExpr(d, d, [&] { return g(rng); });
      return Matrix(a * a.transpose() + d * Matrix::Identity(d, d));
    };
    for (const auto& b : blocks) {
      z.push_back(spd(b.dim));
      s_inv.push_back(spd(b.dim).inverse());
    }
  }

  static const LPVDelayPlant& plant() {
    static const LPVDelayPlant p = engine::build_afr_plant(engine::EngineConfig{});
    return p;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_SchurReference(benchmark::State& state) {
  const auto& f = fixture();
  Matrix out;
  for (auto _ : state) {
    kernels::schur_reference(f.blocks, f.z, f.s_inv, f.built.problem.m, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_SchurParallel(benchmark::State& state) {
  const auto& f = fixture();
  Matrix out;
  for (auto _ : state) {
    kernels::schur_parallel(f.blocks, f.z, f.s_inv, f.built.problem.m, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["threads"] = kernels::max_threads();
}

}  // namespace

BENCHMARK(BM_SchurReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SchurParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
