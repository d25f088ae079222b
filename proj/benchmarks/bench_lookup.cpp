#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include <semrsa/dictionary.hpp>
#include <semrsa/random.hpp>

namespace {

semrsa::EmbeddingStore uniform_store(std::size_t count, std::size_t dim) {
    semrsa::Rng rng(1);
    std::vector<float> v(count * dim);
    for (auto& x : v) x = static_cast<float>(rng.uniform() - 0.5);
    std::vector<std::string> text(count);
    for (std::size_t i = 0; i < count; ++i) text[i] = std::to_string(i);
    return semrsa::build_store(std::move(v), dim, std::move(text));
}

semrsa::RowMatrix queries(Eigen::Index n, Eigen::Index dim) {
    semrsa::Rng rng(2);
    semrsa::RowMatrix q(n, dim);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
    return q;
}

// Args: store entries, queries per batch.
void BM_BatchNearest(benchmark::State& state) {
    const auto count = static_cast<std::size_t>(state.range(0));
    const auto store = uniform_store(count, 512);
    const auto q = queries(state.range(1), 512);
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::batch_nearest(store, q, 5));
    state.SetItemsProcessed(state.iterations() * state.range(1));
    state.counters["entries"] = static_cast<double>(count);
}
BENCHMARK(BM_BatchNearest)->Args({10000, 100})->Args({100000, 1})->Args({100000, 100})->Unit(benchmark::kMillisecond);

void BM_SingleNearest(benchmark::State& state) {
    const auto store = uniform_store(static_cast<std::size_t>(state.range(0)), 512);
    const auto q = queries(1, 512);
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::nearest(store, {q.data(), 512}, 5));
}
BENCHMARK(BM_SingleNearest)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
