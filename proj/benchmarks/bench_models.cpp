#include <benchmark/benchmark.h>

#include <semrsa/fracridge.hpp>
#include <semrsa/nnls.hpp>
#include <semrsa/random.hpp>
#include <semrsa/rcnn.hpp>

namespace {

semrsa::RowMatrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    semrsa::Rng rng(seed);
    semrsa::RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

// Args: samples, features, targets.
void BM_FracridgeFit(benchmark::State& state) {
    const auto X = gaussian(state.range(0), state.range(1), 1);
    const auto Y = gaussian(state.range(0), state.range(2), 2);
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::fracridge_fit(X, Y));
}
BENCHMARK(BM_FracridgeFit)->Args({800, 1000, 512})->Args({2000, 500, 64})->Unit(benchmark::kMillisecond);

void BM_Nnls(benchmark::State& state) {
    const Eigen::MatrixXd A = gaussian(2415, state.range(0), 3);
    const semrsa::Vector b = gaussian(2415, 1, 4).col(0);
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::nnls_solve(A, b));
}
BENCHMARK(BM_Nnls)->Arg(2)->Arg(10);

void BM_RcnnForward(benchmark::State& state) {
    const auto spec = semrsa::RcnnSpec::desk_default();
    const auto weights = semrsa::random_weights(spec, 5);
    semrsa::FeatureMap image(3, 64, 64);
    semrsa::Rng rng(6);
    for (auto& v : image.data) v = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::forward(image, weights, spec));
}
BENCHMARK(BM_RcnnForward)->Unit(benchmark::kMillisecond);

}  // namespace
