#include "semrsa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "semrsa/binary_format.hpp"
#include "semrsa/error.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "dataset_prep";

RowMatrix matrix_from_f32(const std::vector<float>& raw, std::size_t rows, std::size_t cols) {
    RowMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = raw[i];
    return m;
}

}  // namespace

int BetaTensor::session_count() const {
    if (session_of_trial.empty()) return 0;
    return *std::max_element(session_of_trial.begin(), session_of_trial.end()) + 1;
}

void BetaTensor::validate() const {
    const std::size_t t = trial_count();
    if (session_of_trial.size() != t || condition_of_trial.size() != t)
        throw DimensionError(kModule, "trial metadata lengths differ from the trial count");
    if (voxel_coords.size() != voxel_count())
        throw DimensionError(kModule, "voxel_coords length differs from the voxel count");
    std::set<VoxelCoord> seen;
    for (const auto& c : voxel_coords)
        if (!seen.insert(c).second)
            throw ValidationError(kModule, "duplicate voxel coordinate (" + std::to_string(c[0]) + "," +
                                               std::to_string(c[1]) + "," + std::to_string(c[2]) + ")");
    std::set<int> sessions(session_of_trial.begin(), session_of_trial.end());
    int expected = 0;
    for (int s : sessions)
        if (s != expected++) throw ValidationError(kModule, "session indices must be contiguous from 0");
    if (!trials.allFinite()) throw ValidationError(kModule, "betas contain a non-finite value");
}

std::string to_string(EmbeddingKind kind) { return kind == EmbeddingKind::semantic ? "semantic" : "multihot"; }

EmbeddingKind parse_embedding_kind(const std::string& name) {
    if (name == "semantic") return EmbeddingKind::semantic;
    if (name == "multihot") return EmbeddingKind::multihot;
    throw ValidationError(kModule, "unknown embedding kind '" + name + "'");
}

void EmbeddingMatrix::validate() const {
    if (!item_ids.empty() && item_ids.size() != size())
        throw DimensionError(kModule, "embedding item_ids length differs from the row count");
    if (!values.allFinite()) throw ValidationError(kModule, "embeddings contain a non-finite value");
    if (kind == EmbeddingKind::multihot)
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            const double v = values.data()[i];
            if (v != 0.0 && v != 1.0) throw ValidationError(kModule, "multi-hot entries must be 0 or 1");
        }
}

BetaTensor zscore_within_session(const BetaTensor& betas, Diagnostics* diag) {
    betas.validate();
    BetaTensor out = betas;
    const int sessions = betas.session_count();
    const std::size_t p = betas.voxel_count();
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(sessions));
    for (std::size_t t = 0; t < betas.trial_count(); ++t)
        members[static_cast<std::size_t>(betas.session_of_trial[t])].push_back(t);

    for (int s = 0; s < sessions; ++s) {
        const auto& rows = members[static_cast<std::size_t>(s)];
        if (rows.size() < 2)
            throw ValidationError(kModule, "session " + std::to_string(s) + " has fewer than 2 trials");
        const auto count = static_cast<double>(rows.size());
        for (std::size_t v = 0; v < p; ++v) {
            double mean = 0.0;
            for (std::size_t t : rows) mean += betas.trials(t, v);
            mean /= count;
            double ss = 0.0;
            for (std::size_t t : rows) {
                const double d = betas.trials(t, v) - mean;
                ss += d * d;
            }
            const double sd = std::sqrt(ss / (count - 1.0));
            if (sd == 0.0) {
                flag(diag, Degeneracy::zero_variance_voxel);
                for (std::size_t t : rows) out.trials(t, v) = 0.0;
                continue;
            }
            for (std::size_t t : rows) out.trials(t, v) = (betas.trials(t, v) - mean) / sd;
        }
    }
    return out;
}

ConditionResponses average_repetitions(const BetaTensor& betas, int required_reps, Diagnostics* diag) {
    if (required_reps < 1) throw ValidationError(kModule, "required_reps must be at least 1");
    std::vector<ConditionId> order;
    std::unordered_map<ConditionId, std::vector<std::size_t>> trials_of;
    for (std::size_t t = 0; t < betas.trial_count(); ++t) {
        auto [it, inserted] = trials_of.try_emplace(betas.condition_of_trial[t]);
        if (inserted) order.push_back(betas.condition_of_trial[t]);
        it->second.push_back(t);
    }

    ConditionResponses out;
    out.voxel_coords = betas.voxel_coords;
    for (const auto& id : order) {
        if (trials_of[id].size() == static_cast<std::size_t>(required_reps)) {
            out.conditions.push_back(id);
        } else {
            ++out.dropped_conditions;
        }
    }
    flag(diag, Degeneracy::dropped_condition, out.dropped_conditions);

    const std::size_t p = betas.voxel_count();
    out.responses = RowMatrix::Zero(static_cast<Eigen::Index>(out.conditions.size()), static_cast<Eigen::Index>(p));
    out.repetitions_used.assign(out.conditions.size(), required_reps);
    for (std::size_t c = 0; c < out.conditions.size(); ++c) {
        const auto& rows = trials_of[out.conditions[c]];
        for (std::size_t t : rows) out.responses.row(c) += betas.trials.row(t);
        out.responses.row(c) /= static_cast<double>(rows.size());
    }
    return out;
}

Vector mean_caption_embedding(const RowMatrix& caption_embeddings) {
    if (caption_embeddings.rows() == 0) throw ValidationError(kModule, "mean_caption_embedding needs k >= 1");
    if (!caption_embeddings.allFinite()) throw ValidationError(kModule, "caption embeddings are not finite");
    // Shifted accumulation: identical rows reproduce the first row exactly.
    const Vector first = caption_embeddings.row(0).transpose();
    Vector shift = Vector::Zero(caption_embeddings.cols());
    for (Eigen::Index r = 1; r < caption_embeddings.rows(); ++r)
        shift += caption_embeddings.row(r).transpose() - first;
    return first + shift / static_cast<double>(caption_embeddings.rows());
}

EmbeddingMatrix build_multihot(const std::vector<std::vector<std::string>>& annotations,
                               const std::vector<std::string>& vocabulary, std::vector<std::string> item_ids,
                               Diagnostics* diag) {
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < vocabulary.size(); ++i) position.emplace(vocabulary[i], i);
    EmbeddingMatrix out;
    out.kind = EmbeddingKind::multihot;
    out.values = RowMatrix::Zero(static_cast<Eigen::Index>(annotations.size()),
                                 static_cast<Eigen::Index>(vocabulary.size()));
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        if (annotations[i].empty()) flag(diag, Degeneracy::empty_multihot_row);
        for (const auto& category : annotations[i]) {
            const auto it = position.find(category);
            if (it == position.end()) throw ValidationError(kModule, "unknown category id '" + category + "'");
            out.values(i, it->second) = 1.0;
        }
    }
    if (item_ids.empty()) {
        item_ids.resize(annotations.size());
        for (std::size_t i = 0; i < annotations.size(); ++i) item_ids[i] = std::to_string(i);
    }
    out.item_ids = std::move(item_ids);
    out.validate();
    return out;
}

RowMatrix rows_for_ids(const EmbeddingMatrix& embeddings, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < embeddings.item_ids.size(); ++i) row_of.emplace(embeddings.item_ids[i], i);
    RowMatrix out(static_cast<Eigen::Index>(ids.size()), embeddings.values.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = row_of.find(ids[i]);
        if (it == row_of.end()) throw ValidationError(kModule, "no embedding for item '" + ids[i] + "'");
        out.row(i) = embeddings.values.row(it->second);
    }
    return out;
}

void write_betas(const std::filesystem::path& path, const BetaTensor& betas, const nlohmann::json& extra) {
    betas.validate();
    auto out = format::open_output(path, "BET1");
    nlohmann::json header = {{"magic", "BET1"},
                             {"t", betas.trial_count()},
                             {"p", betas.voxel_count()},
                             {"sessions", betas.session_count()},
                             {"condition_of_trial", betas.condition_of_trial},
                             {"session_of_trial", betas.session_of_trial},
                             {"voxel_coords", betas.voxel_coords}};
    for (const auto& [key, value] : extra.items()) header[key] = value;
    format::write_header(out, header);
    format::write_f32(out, std::span<const double>(betas.trials.data(), static_cast<std::size_t>(betas.trials.size())));
}

BetaTensor read_betas(const std::filesystem::path& path, nlohmann::json* header_out) {
    auto in = format::open_input(path, "BET1");
    auto header = format::read_header(in, "BET1", path.string());
    BetaTensor betas;
    const auto t = format::field<std::size_t>(header, "t", "BET1");
    const auto p = format::field<std::size_t>(header, "p", "BET1");
    betas.condition_of_trial = format::field<std::vector<ConditionId>>(header, "condition_of_trial", "BET1");
    betas.session_of_trial = format::field<std::vector<int>>(header, "session_of_trial", "BET1");
    betas.voxel_coords = format::field<std::vector<VoxelCoord>>(header, "voxel_coords", "BET1");
    betas.trials = matrix_from_f32(format::read_f32(in, t * p, "BET1 " + path.string()), t, p);
    betas.validate();
    if (header_out != nullptr) *header_out = std::move(header);
    return betas;
}

void write_condition_responses(const std::filesystem::path& path, const ConditionResponses& responses) {
    BetaTensor as_trials;
    as_trials.trials = responses.responses;
    as_trials.condition_of_trial = responses.conditions;
    as_trials.session_of_trial.assign(responses.conditions.size(), 0);
    as_trials.voxel_coords = responses.voxel_coords;
    write_betas(path, as_trials,
                {{"stage", "condition_means"},
                 {"repetitions_used", responses.repetitions_used},
                 {"dropped_conditions", responses.dropped_conditions}});
}

ConditionResponses load_responses(const std::filesystem::path& path, int required_reps, Diagnostics* diag) {
    nlohmann::json header;
    BetaTensor betas = read_betas(path, &header);
    if (header.value("stage", std::string{}) == "condition_means") {
        ConditionResponses out;
        out.conditions = std::move(betas.condition_of_trial);
        out.responses = std::move(betas.trials);
        out.voxel_coords = std::move(betas.voxel_coords);
        out.repetitions_used = header.value("repetitions_used", std::vector<int>(out.conditions.size(), required_reps));
        out.dropped_conditions = header.value("dropped_conditions", std::size_t{0});
        return out;
    }
    return average_repetitions(zscore_within_session(betas, diag), required_reps, diag);
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& embeddings) {
    embeddings.validate();
    auto out = format::open_output(path, "EMB1");
    std::vector<std::string> ids = embeddings.item_ids;
    if (ids.empty())
        for (std::size_t i = 0; i < embeddings.size(); ++i) ids.push_back(std::to_string(i));
    nlohmann::json header = {{"magic", "EMB1"},
                             {"n", embeddings.size()},
                             {"d", embeddings.dim()},
                             {"kind", to_string(embeddings.kind)},
                             {"item_ids", ids}};
    format::write_header(out, header);
    format::write_f32(out, std::span<const double>(embeddings.values.data(),
                                                   static_cast<std::size_t>(embeddings.values.size())));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    auto in = format::open_input(path, "EMB1");
    const auto header = format::read_header(in, "EMB1", path.string());
    EmbeddingMatrix e;
    const auto n = format::field<std::size_t>(header, "n", "EMB1");
    const auto d = format::field<std::size_t>(header, "d", "EMB1");
    e.kind = parse_embedding_kind(format::field<std::string>(header, "kind", "EMB1"));
    e.item_ids = format::field<std::vector<std::string>>(header, "item_ids", "EMB1");
    e.values = matrix_from_f32(format::read_f32(in, n * d, "EMB1 " + path.string()), n, d);
    e.validate();
    return e;
}

}  // namespace semrsa
