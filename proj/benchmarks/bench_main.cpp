#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "deepjko/energy.hpp"
#include "deepjko/flow.hpp"
#include "deepjko/potential_net.hpp"
#include "deepjko/problems.hpp"

using namespace deepjko;

namespace {

ParticleEnsemble particles(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(1);
  return sample_ensemble(Distribution::gaussian_mixture({Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))}, 1.0), n,
                         rng);
}

ResNetPotential net(std::size_t d, std::size_t m) {
  std::mt19937_64 rng(2);
  return ResNetPotential::random(d, m, 3, InitMode::ScaledNormal, rng);
}

// args: N, m
void BM_FieldEval(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), m = static_cast<std::size_t>(state.range(1));
  const ResNetPotential theta = net(2, m);
  const NetworkPotential phi(theta);
  const ParticleEnsemble e = particles(n, 2);
  ad::Tensor pts(2, n);
  for (std::size_t j = 0; j < n; ++j) {
    pts(0, j) = e.positions(j, 0);
    pts(1, j) = e.positions(j, 1);
  }
  for (auto _ : state) benchmark::DoNotOptimize(phi.evaluate(pts, 0.0));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_FieldEval)->Args({500, 64})->Args({1000, 64})->Args({500, 128});

// One training iteration: taped loss plus backward. args: N, m, N_τ
void BM_LossBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), m = static_cast<std::size_t>(state.range(1));
  const ResNetPotential theta = net(2, m);
  const ParticleEnsemble e = particles(n, 2);
  EnergyFunctional f;
  f.internal = InternalEnergy::entropy();
  f.external = std::make_shared<QuadraticField>(0.5);
  LossOptions opts;
  opts.dt = 0.025;
  opts.schedule = {static_cast<std::size_t>(state.range(2)), Integrator::RK4};
  for (auto _ : state) {
    TapedLoss loss = batch_loss(theta, f, e, opts);
    benchmark::DoNotOptimize(loss.tape.backward(loss.output));
  }
}
BENCHMARK(BM_LossBackward)->Args({500, 64, 1})->Args({500, 128, 2})->Unit(benchmark::kMillisecond);

void BM_Integrate(benchmark::State& state) {
  const ResNetPotential theta = net(2, 64);
  const ParticleEnsemble e = particles(static_cast<std::size_t>(state.range(0)), 2);
  const InnerSchedule s{static_cast<std::size_t>(state.range(1)), Integrator::RK4};
  for (auto _ : state) benchmark::DoNotOptimize(integrate(theta, s, e));
}
BENCHMARK(BM_Integrate)->Args({1000, 1})->Args({1000, 8})->Unit(benchmark::kMillisecond);

void BM_PairInteraction(benchmark::State& state) {
  const ResNetPotential theta = net(2, 64);
  const ParticleEnsemble e = particles(static_cast<std::size_t>(state.range(0)), 2);
  EnergyFunctional f;
  f.interaction = std::make_shared<SquaredDistanceKernel>(1.0);
  LossOptions opts;
  opts.dt = 0.02;
  opts.schedule = {1, Integrator::ForwardEuler};
  for (auto _ : state) {
    TapedLoss loss = batch_loss(theta, f, e, opts);
    benchmark::DoNotOptimize(loss.tape.backward(loss.output));
  }
}
BENCHMARK(BM_PairInteraction)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
