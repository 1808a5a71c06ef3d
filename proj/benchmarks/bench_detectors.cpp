#include <benchmark/benchmark.h>

#include "cdetect/asd.hpp"
#include "cdetect/baselines.hpp"
#include "cdetect/dsd.hpp"
#include "cdetect/model.hpp"

using namespace cdetect;

namespace {

struct Fixture {
  Dictionary dict;
  Matrix a;
  Vector y;
  double alpha;
};

Fixture make_fixture(int m, Eigen::Index k, Eigen::Index n) {
  Dictionary dict = synthetic_dictionary(m, n, 0.05,
                                         std::vector<double>(m, 1.0 / m),
                                         RngStream{10, 0});
  Matrix a = gaussian_matrix(k, n, 1.0 / k, RngStream{10, 1});
  Sampler s(RngStream{10, 2});
  const double alpha = 21.0 * std::sqrt(static_cast<double>(k));
  Vector y = alpha * (a * dict.target(0)) + standard_normal_vector(k, s);
  return Fixture{std::move(dict), std::move(a), std::move(y), alpha};
}

void BM_ClassifyMap(benchmark::State& state) {
  const Fixture fx = make_fixture(9, state.range(0), 106);
  for (auto _ : state) {
    benchmark::DoNotOptimize(classify_map(fx.y, fx.alpha, fx.a, fx.dict));
  }
}
BENCHMARK(BM_ClassifyMap)->Arg(18)->Arg(53);

void BM_ClassifyProjected(benchmark::State& state) {
  const Fixture fx = make_fixture(9, state.range(0), 106);
  const ProjectedDictionary projected(fx.a, fx.dict);
  for (auto _ : state) {
    benchmark::DoNotOptimize(projected.classify(fx.y, fx.alpha));
  }
}
BENCHMARK(BM_ClassifyProjected)->Arg(18)->Arg(53);

void BM_AnomalyStatistic(benchmark::State& state) {
  const Fixture fx = make_fixture(5, state.range(0), 106);
  const ProjectedDictionary projected(fx.a, fx.dict);
  for (auto _ : state) {
    benchmark::DoNotOptimize(projected.statistic(fx.y, fx.alpha));
  }
}
BENCHMARK(BM_AnomalyStatistic)->Arg(18)->Arg(53);

void BM_PvalueBound(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  double d = std::sqrt(static_cast<double>(k));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        pvalue_upper_bound(d, k, 2.5 * std::sqrt(k), 0.1, 0.1, 0.0));
    d += 1e-9;
  }
}
BENCHMARK(BM_PvalueBound)->Arg(18)->Arg(53);

void BM_BhProcedure(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Sampler s(RngStream{11, 0});
  std::vector<double> p(m);
  for (double& v : p) v = s.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bh_procedure(p, 0.05));
  }
}
BENCHMARK(BM_BhProcedure)->Arg(2000)->Arg(8100);

void BM_DownsampledClassify(benchmark::State& state) {
  const Eigen::Index k = state.range(0);
  const Fixture fx = make_fixture(9, k, 106);
  Matrix cov = Matrix::Identity(k, k) * 5.0;
  const DownsampledMixture mixture(fx.dict, k, cov);
  Sampler s(RngStream{12, 0});
  const Vector y = standard_normal_vector(k, s);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mixture.classify(y, fx.alpha));
  }
}
BENCHMARK(BM_DownsampledClassify)->Arg(18)->Arg(53);

}  // namespace
