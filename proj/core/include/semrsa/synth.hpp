#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrsa/dataset.hpp"
#include "semrsa/dictionary.hpp"
#include "semrsa/volume.hpp"

namespace semrsa {

/// Planted ground truth for the synthetic pipeline.
struct SynthSpec {
    std::size_t n_conditions = 300;
    Grid grid{20, 20, 20};
    std::size_t embedding_dim = 32;
    std::vector<VoxelCoord> planted_centers{{10, 10, 10}};
    double planted_radius = 5.0;
    /// driven voxels x embedding_dim; drawn N(0, 1) when empty.
    RowMatrix ground_truth;
    double noise_sigma = 1.0;
    /// Noise of the non-driven voxels; noise_sigma when unset.
    std::optional<double> background_sigma;
    int sessions = 1;
    int repetitions = 3;
    /// Dictionary entries (items plus random distractors); 0 for none.
    std::size_t dictionary_size = 0;

    void validate() const;
};

struct SynthResult {
    BetaTensor betas;
    EmbeddingMatrix embeddings;
    RowMatrix ground_truth;
    std::vector<std::size_t> driven_voxels;  // response columns, ascending
    nlohmann::json manifest;
    std::optional<EmbeddingStore> dictionary;
};

/// Unit-norm random embeddings E; trial responses E G^T + N(0, sigma) at the
/// driven voxels, pure noise elsewhere. Trials are shuffled and dealt to the
/// sessions in contiguous blocks.
SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed);

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
/// Fields absent from `j` keep their defaults. Ground truth is not read.
SynthSpec synth_spec_from_json(const nlohmann::json& j);

}  // namespace semrsa
