#include <benchmark/benchmark.h>

#include "cdetect/numerics.hpp"
#include "cdetect/sensing.hpp"

using namespace cdetect;

namespace {

void BM_SpectralNorm(benchmark::State& state) {
  const Eigen::Index k = state.range(0);
  const Matrix a = gaussian_matrix(k, 2 * k, 1.0 / k, RngStream{1, 0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(spectral_norm(a));
  }
}
BENCHMARK(BM_SpectralNorm)->Arg(18)->Arg(53)->Arg(106);

void BM_InvSqrtSym(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Matrix g = gaussian_matrix(n, n, 1.0, RngStream{2, 0});
  Matrix m = g * g.transpose() / static_cast<double>(n) +
             0.1 * Matrix::Identity(n, n);
  m = 0.5 * (m + m.transpose());
  for (auto _ : state) {
    benchmark::DoNotOptimize(inv_sqrt_sym(m));
  }
}
BENCHMARK(BM_InvSqrtSym)->Arg(18)->Arg(53)->Arg(106);

void BM_NoncentralChisqCdf(benchmark::State& state) {
  const double nc = static_cast<double>(state.range(0));
  double x = 50.0 + nc;
  for (auto _ : state) {
    benchmark::DoNotOptimize(noncentral_chisq_cdf(x, 53, nc));
    x += 1e-9;  // defeat value caching effects
  }
}
BENCHMARK(BM_NoncentralChisqCdf)->Arg(0)->Arg(4)->Arg(1600);

void BM_DesignedPlan(benchmark::State& state) {
  const Eigen::Index k = state.range(0);
  const Eigen::Index n = 106;
  const Matrix g = gaussian_matrix(n, n, 1.0, RngStream{3, 0});
  Matrix cov = g * g.transpose();
  cov *= 0.03 / spectral_norm(cov);
  cov = 0.5 * (cov + cov.transpose());
  const BackgroundModel bg(Vector::Zero(n), cov, 5.0);
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{3, 1});
  for (auto _ : state) {
    benchmark::DoNotOptimize(SensingPlan::designed(a, bg));
  }
}
BENCHMARK(BM_DesignedPlan)->Arg(18)->Arg(53);

void BM_Whiten(benchmark::State& state) {
  const Eigen::Index k = 53, n = 106;
  const BackgroundModel bg = BackgroundModel::zero(n, 5.0);
  const Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{4, 0});
  const SensingPlan plan = SensingPlan::designed(a, bg);
  Sampler s(RngStream{4, 1});
  const Vector z = standard_normal_vector(k, s);
  for (auto _ : state) {
    benchmark::DoNotOptimize(whiten(plan, z, bg.mean()));
  }
}
BENCHMARK(BM_Whiten);

}  // namespace

BENCHMARK_MAIN();
