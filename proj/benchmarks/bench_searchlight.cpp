#include <benchmark/benchmark.h>

#include <semrsa/nnls.hpp>
#include <semrsa/rdm.hpp>
#include <semrsa/searchlight.hpp>
#include <semrsa/synth.hpp>

namespace {

struct Fixture {
    semrsa::ConditionResponses responses;
    semrsa::Rdm model;
    semrsa::SearchlightIndex index;
    semrsa::SplitPlan plan;
};

// Side length of the cubic grid and sphere radius.
Fixture make_fixture(int side, double radius) {
    semrsa::SynthSpec spec;
    spec.grid = {side, side, side};
    spec.planted_centers = {{side / 2, side / 2, side / 2}};
    spec.planted_radius = side / 4.0;
    const auto s = semrsa::synth_generate(spec, 3);
    Fixture f;
    f.responses = semrsa::average_repetitions(s.betas);
    f.model = semrsa::build_rdm(s.embeddings.values, semrsa::Metric::cosine, s.embeddings.item_ids);
    const auto grid = semrsa::grid_for(f.responses.voxel_coords);
    f.index = semrsa::build_sphere_index(grid, semrsa::mask_from_coords(grid, f.responses.voxel_coords), radius);
    f.plan = semrsa::make_split_plan(f.responses.condition_count(), 100, 4);
    return f;
}

void BM_SphereIndex(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const semrsa::Grid grid{side, side, side};
    const std::vector<std::uint8_t> mask(grid.size(), 1);
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::build_sphere_index(grid, mask, 5.0));
}
BENCHMARK(BM_SphereIndex)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_SearchlightCorrelation(benchmark::State& state) {
    const auto f = make_fixture(static_cast<int>(state.range(0)), static_cast<double>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::searchlight_correlation(f.responses, f.model, f.index, f.plan));
    state.counters["centers"] = static_cast<double>(f.index.centers.size());
    state.counters["splits"] = static_cast<double>(f.plan.splits.size());
}
BENCHMARK(BM_SearchlightCorrelation)->Args({10, 3})->Args({12, 5})->Unit(benchmark::kMillisecond);

void BM_CvReweight(benchmark::State& state) {
    const auto f = make_fixture(10, 3.0);
    // Second predictor: the model with conditions permuted, relabelled to the response ids.
    std::vector<std::size_t> rows(f.model.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (i * 7) % rows.size();
    const semrsa::Rdm shuffled(f.model.subset(rows).values(), f.model.condition_ids());
    const std::vector<semrsa::Rdm> rdms{f.model, shuffled};
    for (auto _ : state) benchmark::DoNotOptimize(semrsa::cv_rdm_reweight(rdms, f.responses, f.index, f.plan));
}
BENCHMARK(BM_CvReweight)->Unit(benchmark::kMillisecond);

}  // namespace
