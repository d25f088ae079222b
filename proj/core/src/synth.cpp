#include "semrsa/synth.hpp"

#include <cmath>
#include <cstdio>

#include "semrsa/error.hpp"
#include "semrsa/random.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "harness_cli";

// One independent stream per generated quantity.
enum Stream : std::uint64_t { embeddings = 1, ground_truth = 2, order = 3, noise = 4, distractors = 5 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void unit_gaussian_rows(RowMatrix& m, Rng& rng) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double norm = 0.0;
        do {
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
            norm = m.row(i).norm();
        } while (norm == 0.0);
        m.row(i) /= norm;
    }
}

std::string item_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%05zu", i);
    return buf;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_conditions < 2) throw ValidationError(kModule, "synth needs at least 2 conditions");
    if (grid.nx < 1 || grid.ny < 1 || grid.nz < 1) throw ValidationError(kModule, "synth grid must be non-empty");
    if (embedding_dim < 1) throw ValidationError(kModule, "embedding_dim must be positive");
    if (!(planted_radius >= 0.0)) throw ValidationError(kModule, "planted radius must be non-negative");
    for (const auto& c : planted_centers)
        if (!grid.contains(c)) throw ValidationError(kModule, "planted center lies outside the grid");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ValidationError(kModule, "noise sigma must be >= 0");
    if (background_sigma && (!(*background_sigma >= 0.0) || !std::isfinite(*background_sigma)))
        throw ValidationError(kModule, "background sigma must be >= 0");
    if (repetitions < 1) throw ValidationError(kModule, "repetitions must be positive");
    if (sessions < 1) throw ValidationError(kModule, "sessions must be positive");
    const std::size_t trials = n_conditions * static_cast<std::size_t>(repetitions);
    if (trials / static_cast<std::size_t>(sessions) < 2)
        throw ValidationError(kModule, "each session needs at least 2 trials");
    if (dictionary_size != 0 && dictionary_size < n_conditions)
        throw ValidationError(kModule, "dictionary must hold at least every item");
    if (ground_truth.size() != 0 && ground_truth.cols() != static_cast<Eigen::Index>(embedding_dim))
        throw ValidationError(kModule, "ground truth width differs from embedding_dim");
}

SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    SynthResult out;
    const Grid& g = spec.grid;
    const std::size_t n = spec.n_conditions, d = spec.embedding_dim, voxels = g.size();

    const double r2 = spec.planted_radius * spec.planted_radius;
    for (std::size_t v = 0; v < voxels; ++v) {
        const VoxelCoord c = g.coord(v);
        for (const auto& p : spec.planted_centers) {
            const double dx = c[0] - p[0], dy = c[1] - p[1], dz = c[2] - p[2];
            if (dx * dx + dy * dy + dz * dz <= r2) {
                out.driven_voxels.push_back(v);
                break;
            }
        }
    }
    const auto driven = static_cast<Eigen::Index>(out.driven_voxels.size());

    out.embeddings.kind = EmbeddingKind::semantic;
    out.embeddings.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) out.embeddings.item_ids.push_back(item_id(i));
    {
        Rng rng(stream_seed(seed, embeddings));
        unit_gaussian_rows(out.embeddings.values, rng);
    }

    if (spec.ground_truth.size() != 0) {
        if (spec.ground_truth.rows() != driven)
            throw ValidationError(kModule, "ground truth has " + std::to_string(spec.ground_truth.rows()) +
                                               " rows for " + std::to_string(driven) + " driven voxels");
        out.ground_truth = spec.ground_truth;
    } else {
        out.ground_truth.resize(driven, static_cast<Eigen::Index>(d));
        Rng rng(stream_seed(seed, ground_truth));
        for (Eigen::Index i = 0; i < driven; ++i)
            for (Eigen::Index j = 0; j < out.ground_truth.cols(); ++j) out.ground_truth(i, j) = rng.normal();
    }
    const RowMatrix signal = out.embeddings.values * out.ground_truth.transpose();  // n x driven

    const std::size_t reps = static_cast<std::size_t>(spec.repetitions);
    const std::size_t trials = n * reps;
    std::vector<std::size_t> order;
    {
        Rng rng(stream_seed(seed, Stream::order));
        order = rng.permutation(trials);
    }
    BetaTensor& b = out.betas;
    b.trials.resize(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(voxels));
    b.session_of_trial.resize(trials);
    b.condition_of_trial.resize(trials);
    for (std::size_t v = 0; v < voxels; ++v) b.voxel_coords.push_back(g.coord(v));

    std::vector<Eigen::Index> driven_slot(voxels, -1);
    for (Eigen::Index k = 0; k < driven; ++k) driven_slot[out.driven_voxels[static_cast<std::size_t>(k)]] = k;
    const double bg = spec.background_sigma.value_or(spec.noise_sigma);
    const auto sessions = static_cast<std::size_t>(spec.sessions);

    Rng rng(stream_seed(seed, noise));
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t cond = order[t] / reps;
        b.condition_of_trial[t] = out.embeddings.item_ids[cond];
        b.session_of_trial[t] = static_cast<int>(t * sessions / trials);
        for (std::size_t v = 0; v < voxels; ++v) {
            const Eigen::Index k = driven_slot[v];
            const auto row = static_cast<Eigen::Index>(t), col = static_cast<Eigen::Index>(v);
            b.trials(row, col) = k >= 0 ? signal(static_cast<Eigen::Index>(cond), k) + spec.noise_sigma * rng.normal()
                                        : bg * rng.normal();
        }
    }

    if (spec.dictionary_size != 0) {
        const std::size_t extra = spec.dictionary_size - n;
        RowMatrix distract(static_cast<Eigen::Index>(extra), static_cast<Eigen::Index>(d));
        Rng drng(stream_seed(seed, distractors));
        unit_gaussian_rows(distract, drng);
        RowMatrix all(static_cast<Eigen::Index>(spec.dictionary_size), static_cast<Eigen::Index>(d));
        all.topRows(static_cast<Eigen::Index>(n)) = out.embeddings.values;
        all.bottomRows(static_cast<Eigen::Index>(extra)) = distract;
        std::vector<std::string> sentences;
        sentences.reserve(spec.dictionary_size);
        for (std::size_t i = 0; i < n; ++i) sentences.push_back("item " + out.embeddings.item_ids[i]);
        for (std::size_t i = 0; i < extra; ++i) sentences.push_back("distractor " + std::to_string(i));
        out.dictionary = build_store(all, std::move(sentences));
    }

    nlohmann::json planted = nlohmann::json::array();
    for (const auto& c : spec.planted_centers) planted.push_back(c);
    out.manifest = synth_spec_to_json(spec);
    out.manifest["seed"] = seed;
    out.manifest["planted_centers"] = planted;
    out.manifest["driven_voxel_count"] = out.driven_voxels.size();
    out.manifest["background_sigma"] = bg;
    out.manifest["signal"] = "E G^T + N(0, noise_sigma)";
    return out;
}

nlohmann::json synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : spec.planted_centers) centers.push_back(c);
    nlohmann::json j = {{"n_conditions", spec.n_conditions},
                        {"grid", {spec.grid.nx, spec.grid.ny, spec.grid.nz}},
                        {"embedding_dim", spec.embedding_dim},
                        {"planted_centers", centers},
                        {"planted_radius", spec.planted_radius},
                        {"noise_sigma", spec.noise_sigma},
                        {"sessions", spec.sessions},
                        {"repetitions", spec.repetitions},
                        {"dictionary_size", spec.dictionary_size}};
    if (spec.background_sigma) j["background_sigma"] = *spec.background_sigma;
    return j;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        if (j.contains("n_conditions")) s.n_conditions = j.at("n_conditions").get<std::size_t>();
        if (j.contains("grid")) {
            const auto dims = j.at("grid").get<std::vector<int>>();
            if (dims.size() != 3) throw ValidationError(kModule, "grid needs three dimensions");
            s.grid = {dims[0], dims[1], dims[2]};
        }
        if (j.contains("embedding_dim")) s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        if (j.contains("planted_centers")) s.planted_centers = j.at("planted_centers").get<std::vector<VoxelCoord>>();
        if (j.contains("planted_radius")) s.planted_radius = j.at("planted_radius").get<double>();
        if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
        if (j.contains("background_sigma")) s.background_sigma = j.at("background_sigma").get<double>();
        if (j.contains("sessions")) s.sessions = j.at("sessions").get<int>();
        if (j.contains("repetitions")) s.repetitions = j.at("repetitions").get<int>();
        if (j.contains("dictionary_size")) s.dictionary_size = j.at("dictionary_size").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(kModule, std::string("synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

}  // namespace semrsa
