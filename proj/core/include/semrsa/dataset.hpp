#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrsa/diagnostics.hpp"
#include "semrsa/matrix.hpp"
#include "semrsa/rdm.hpp"

namespace semrsa {

using VoxelCoord = std::array<int, 3>;

/// Single-trial responses (trials x voxels) with their bookkeeping.
struct BetaTensor {
    RowMatrix trials;
    std::vector<int> session_of_trial;
    std::vector<ConditionId> condition_of_trial;
    std::vector<VoxelCoord> voxel_coords;

    std::size_t trial_count() const noexcept { return static_cast<std::size_t>(trials.rows()); }
    std::size_t voxel_count() const noexcept { return static_cast<std::size_t>(trials.cols()); }
    int session_count() const;

    /// Throws ValidationError on duplicate coordinates, non-contiguous
    /// sessions or inconsistent lengths.
    void validate() const;
};

/// Repetition-averaged responses, one row per retained condition.
struct ConditionResponses {
    std::vector<ConditionId> conditions;
    RowMatrix responses;
    std::vector<int> repetitions_used;
    std::vector<VoxelCoord> voxel_coords;
    std::size_t dropped_conditions = 0;

    std::size_t condition_count() const noexcept { return conditions.size(); }
    std::size_t voxel_count() const noexcept { return static_cast<std::size_t>(responses.cols()); }
};

enum class EmbeddingKind { semantic, multihot };

std::string to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(const std::string& name);

struct EmbeddingMatrix {
    RowMatrix values;
    EmbeddingKind kind = EmbeddingKind::semantic;
    std::vector<std::string> item_ids;

    std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(values.cols()); }
    void validate() const;
};

/// Per voxel and session: mean 0, sample standard deviation 1. Voxels that
/// are constant within a session become 0 there.
BetaTensor zscore_within_session(const BetaTensor& betas, Diagnostics* diag = nullptr);

/// Keeps conditions with exactly `required_reps` trials, in first-appearance
/// order, and averages their trials.
ConditionResponses average_repetitions(const BetaTensor& betas, int required_reps = 3,
                                       Diagnostics* diag = nullptr);

Vector mean_caption_embedding(const RowMatrix& caption_embeddings);

/// One row per image with 1 at the vocabulary position of each category.
EmbeddingMatrix build_multihot(const std::vector<std::vector<std::string>>& annotations,
                               const std::vector<std::string>& vocabulary,
                               std::vector<std::string> item_ids = {}, Diagnostics* diag = nullptr);

/// Rows of `embeddings` reordered to follow `ids`; throws when an id is missing.
RowMatrix rows_for_ids(const EmbeddingMatrix& embeddings, const std::vector<std::string>& ids);

/// BET1 and EMB1 formats. Stored precision is float32.
void write_betas(const std::filesystem::path& path, const BetaTensor& betas,
                 const nlohmann::json& extra = nlohmann::json::object());
BetaTensor read_betas(const std::filesystem::path& path, nlohmann::json* header_out = nullptr);

/// Condition means stored as BET1 with one trial per condition and
/// header field "stage": "condition_means".
void write_condition_responses(const std::filesystem::path& path, const ConditionResponses& responses);

/// Reads BET1; raw trials are z-scored and averaged, condition means are
/// returned as stored.
ConditionResponses load_responses(const std::filesystem::path& path, int required_reps = 3,
                                  Diagnostics* diag = nullptr);

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& embeddings);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

}  // namespace semrsa
