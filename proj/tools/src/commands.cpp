#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>

#include <semrsa/binary_format.hpp>
#include <semrsa/dataset.hpp>
#include <semrsa/dictionary.hpp>
#include <semrsa/error.hpp>
#include <semrsa/fracridge.hpp>
#include <semrsa/nnls.hpp>
#include <semrsa/rcnn.hpp>
#include <semrsa/rdm.hpp>
#include <semrsa/searchlight.hpp>
#include <semrsa/synth.hpp>
#include <semrsa/volume.hpp>

#include "cli.hpp"
#include "csv.hpp"

namespace semrsa::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kModule = "harness_cli";

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

int parse_int(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(kModule, what + ": '" + text + "' is not an integer");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    for (const auto& s : split_list(text, ',')) out.push_back(parse_int(s, what));
    return out;
}

VoxelCoord parse_coord(const std::string& text) {
    const auto v = parse_int_list(text, "coordinate");
    if (v.size() != 3) throw ValidationError(kModule, "coordinate '" + text + "' needs three components");
    return {v[0], v[1], v[2]};
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(kModule, "cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// Files with `ext` under `dir`, sorted by name.
std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ValidationError(kModule, "no " + ext + " files in " + dir.string());
    return out;
}

ojson degeneracy_report(const Diagnostics& diag) {
    ojson j = ojson::object();
    for (std::size_t i = 0; i < kDegeneracyKinds; ++i) {
        const auto d = static_cast<Degeneracy>(i);
        if (diag.flagged(d)) j[std::string(to_string(d))] = diag.count(d);
    }
    return j;
}

std::string split_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "split_%03zu.vol", i);
    return buf;
}

void write_vol(Run& run, const fs::path& path, const Volume& v) {
    write_volume(path, v);
    run.output(path);
}

// Loads BET1 responses, restricted to an optional mask, with the grid they live on.
struct SpatialResponses {
    ConditionResponses responses;
    Grid grid;
    std::vector<std::uint8_t> mask;
};

SpatialResponses load_spatial(Run& run, const fs::path& betas, const std::string& mask_path, int reps,
                              Diagnostics* diag) {
    run.input(betas);
    SpatialResponses s;
    s.responses = load_responses(betas, reps, diag);
    if (s.responses.condition_count() == 0)
        throw ValidationError(kModule, "no condition in " + betas.string() + " has " + std::to_string(reps) + " trials");
    if (mask_path.empty()) {
        s.grid = grid_for(s.responses.voxel_coords);
        s.mask = mask_from_coords(s.grid, s.responses.voxel_coords);
        return s;
    }
    run.input(mask_path);
    const Volume m = read_volume(mask_path);
    s.grid = m.grid;
    for (const auto& c : s.responses.voxel_coords)
        if (!s.grid.contains(c)) throw DimensionError(kModule, "voxel lies outside the mask grid");
    const auto have = mask_from_coords(s.grid, s.responses.voxel_coords);
    s.mask.assign(s.grid.size(), 0);
    for (std::size_t i = 0; i < s.grid.size(); ++i) s.mask[i] = have[i] && m.mask[i] && m.values[i] != 0.0;
    return s;
}

std::vector<Volume> read_maps(Run& run, const std::vector<std::string>& paths) {
    std::vector<Volume> maps;
    for (const auto& p : paths) {
        run.input(p);
        maps.push_back(read_volume(p));
    }
    return maps;
}

void write_split_csv(Run& run, const fs::path& path, const DataSplit& split) {
    CsvWriter csv(path);
    csv.field("item_id").field("set").end_row();
    const std::pair<const char*, const std::vector<std::string>*> sets[] = {
        {"train", &split.train}, {"test", &split.test}, {"validation", &split.validation}};
    for (const auto& [name, ids] : sets)
        for (const auto& id : *ids) csv.field(id).field(name).end_row();
    csv.close();
    run.output(path);
}

std::vector<std::string> read_split_set(const fs::path& path, const std::string& set) {
    const auto rows = read_csv(path);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "item_id" || rows[0][1] != "set")
        throw ValidationError(kModule, path.string() + ": expected header item_id,set");
    std::vector<std::string> ids;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 2) throw ValidationError(kModule, path.string() + ": short row " + std::to_string(i + 1));
        if (rows[i][1] == set) ids.push_back(rows[i][0]);
    }
    if (ids.empty()) throw ValidationError(kModule, path.string() + ": no items in set '" + set + "'");
    return ids;
}

// Train / test / validation assignment shared by decode-fit and encode.
struct SplitOptions {
    std::size_t test_size = 1000;
    std::size_t validation_size = 0;
    std::string validation_ids;
};

void add_split_options(Command& cmd, SplitOptions& o) {
    cmd.app->add_option("--test-size", o.test_size, "Items held out to choose the ridge fraction");
    cmd.app->add_option("--validation-size", o.validation_size, "Items sampled for final validation");
    cmd.app->add_option("--validation-ids", o.validation_ids, "Text file of validation item ids, one per line")
        ->check(CLI::ExistingFile);
}

DataSplit build_split(Run& run, const SplitOptions& o, const std::vector<std::string>& ids, std::uint64_t seed) {
    if (!o.validation_ids.empty()) {
        if (o.validation_size != 0)
            throw ValidationError(kModule, "--validation-ids and --validation-size are exclusive");
        run.input(o.validation_ids);
        std::vector<std::string> held;
        for (auto& line : read_lines(o.validation_ids))
            if (!line.empty()) held.push_back(line);
        return make_data_split(ids, held, o.test_size, seed);
    }
    if (o.validation_size == 0) return make_data_split(ids, std::vector<std::string>{}, o.test_size, seed);
    return make_data_split(ids, o.validation_size, o.test_size, seed);
}

// Conditions that have both responses and embeddings, in response order.
std::vector<std::string> shared_ids(const ConditionResponses& r, const EmbeddingMatrix& e) {
    const std::set<std::string> have(e.item_ids.begin(), e.item_ids.end());
    std::vector<std::string> ids;
    for (const auto& c : r.conditions)
        if (have.count(c)) ids.push_back(c);
    if (ids.empty()) throw ValidationError(kModule, "responses and embeddings share no item ids");
    return ids;
}

void add_synth(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string spec, out;
        std::uint64_t seed = 0;
        std::size_t n_conditions = 0, embedding_dim = 0, dictionary_size = 0;
        std::string grid;
        std::vector<std::string> centers;
        double radius = 0, noise = 0, background = 0;
        int sessions = 0, repetitions = 0;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("synth", "Generate betas, embeddings and a dictionary with a planted signal");
    auto* a = cmd.app;
    a->add_option("--spec", o->spec, "JSON synthetic spec; flags below override its fields")->check(CLI::ExistingFile);
    cmd.need(a->add_option("--seed", o->seed, "Random seed"));
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    auto* n = a->add_option("--n-conditions", o->n_conditions, "Number of conditions");
    auto* grid = a->add_option("--grid", o->grid, "Grid dims as x,y,z");
    auto* dim = a->add_option("--embedding-dim", o->embedding_dim, "Embedding dimension");
    auto* centers = a->add_option("--center", o->centers, "Planted sphere center x,y,z (repeatable)");
    auto* radius = a->add_option("--planted-radius", o->radius, "Planted sphere radius in voxels");
    auto* noise = a->add_option("--noise", o->noise, "Noise standard deviation at driven voxels");
    auto* bg = a->add_option("--background-noise", o->background, "Noise standard deviation elsewhere");
    auto* sessions = a->add_option("--sessions", o->sessions, "Number of sessions");
    auto* reps = a->add_option("--repetitions", o->repetitions, "Repetitions per condition");
    auto* dict = a->add_option("--dictionary-size", o->dictionary_size, "Dictionary entries (0 for none)");
    // Overrides carry no default of their own; unset ones leave the generator settings alone.
    for (auto* opt : {n, grid, dim, centers, radius, noise, bg, sessions, reps, dict}) opt->default_str("");
    cmd.body = [=](Run& run) {
        SynthSpec spec;
        if (!o->spec.empty()) {
            run.input(o->spec);
            std::ifstream in(o->spec);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(kModule, o->spec + ": " + e.what());
            }
            spec = synth_spec_from_json(j);
        }
        if (n->count()) spec.n_conditions = o->n_conditions;
        if (grid->count()) {
            const auto g = parse_coord(o->grid);
            spec.grid = {g[0], g[1], g[2]};
        }
        if (dim->count()) spec.embedding_dim = o->embedding_dim;
        if (centers->count()) {
            spec.planted_centers.clear();
            for (const auto& c : o->centers) spec.planted_centers.push_back(parse_coord(c));
        }
        if (radius->count()) spec.planted_radius = o->radius;
        if (noise->count()) spec.noise_sigma = o->noise;
        if (bg->count()) spec.background_sigma = o->background;
        if (sessions->count()) spec.sessions = o->sessions;
        if (reps->count()) spec.repetitions = o->repetitions;
        if (dict->count()) spec.dictionary_size = o->dictionary_size;
        run.set_seed(o->seed);

        const SynthResult r = synth_generate(spec, o->seed);
        const fs::path out = o->out;
        write_betas(out / "betas.bet", r.betas);
        run.output(out / "betas.bet");
        write_embeddings(out / "embeddings.emb", r.embeddings);
        run.output(out / "embeddings.emb");

        EmbeddingMatrix g;
        g.values = r.ground_truth;
        for (std::size_t col : r.driven_voxels) g.item_ids.push_back("voxel_" + std::to_string(col));
        write_embeddings(out / "ground_truth.emb", g);
        run.output(out / "ground_truth.emb");

        ojson truth = ojson::parse(r.manifest.dump());
        ojson driven = ojson::array();
        for (std::size_t col : r.driven_voxels) {
            const auto& c = r.betas.voxel_coords[col];
            driven.push_back({c[0], c[1], c[2]});
        }
        truth["driven_voxels"] = driven;
        truth["ground_truth_file"] = "ground_truth.emb";
        {
            auto f = format::open_output(out / "truth.json", "truth");
            f << truth.dump(2) << '\n';
        }
        run.output(out / "truth.json");

        if (r.dictionary) {
            write_store(out / "dictionary.dic", *r.dictionary);
            run.output(out / "dictionary.dic");
        }
        run.report()["trials"] = r.betas.trial_count();
        run.report()["voxels"] = r.betas.voxel_count();
        run.report()["driven_voxels"] = r.driven_voxels.size();
    };
    commands.push_back(std::move(cmd));
}

void add_ingest(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string betas, captions, annotations, vocabulary, out;
        int reps = 3;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("ingest", "Prepare responses or embeddings from BET1/EMB1/CSV inputs");
    auto* a = cmd.app;
    a->add_option("--betas", o->betas, "Raw single-trial BET1 file to z-score and average")->check(CLI::ExistingFile);
    a->add_option("--captions", o->captions, "EMB1 of caption embeddings, repeated item ids are averaged")
        ->check(CLI::ExistingFile);
    a->add_option("--annotations", o->annotations, "CSV item_id,categories (';'-separated) for multi-hot vectors")
        ->check(CLI::ExistingFile);
    a->add_option("--vocabulary", o->vocabulary, "Category vocabulary, one per line (default: sorted union)")
        ->check(CLI::ExistingFile);
    a->add_option("--reps", o->reps, "Required repetitions per condition");
    cmd.need(a->add_option("--out", o->out, "Output file"));
    cmd.body = [=](Run& run) {
        const int modes = !o->betas.empty() + !o->captions.empty() + !o->annotations.empty();
        if (modes != 1) throw ValidationError(kModule, "ingest takes exactly one of --betas, --captions, --annotations");
        Diagnostics diag;
        if (!o->betas.empty()) {
            run.input(o->betas);
            const BetaTensor raw = read_betas(o->betas);
            const ConditionResponses r = average_repetitions(zscore_within_session(raw, &diag), o->reps, &diag);
            write_condition_responses(o->out, r);
            run.report()["conditions"] = r.condition_count();
            run.report()["dropped_conditions"] = r.dropped_conditions;
        } else if (!o->captions.empty()) {
            run.input(o->captions);
            const EmbeddingMatrix caps = read_embeddings(o->captions);
            std::vector<std::string> order;
            std::unordered_map<std::string, std::vector<Eigen::Index>> rows;
            for (std::size_t i = 0; i < caps.item_ids.size(); ++i) {
                auto [it, fresh] = rows.try_emplace(caps.item_ids[i]);
                if (fresh) order.push_back(caps.item_ids[i]);
                it->second.push_back(static_cast<Eigen::Index>(i));
            }
            EmbeddingMatrix out;
            out.kind = EmbeddingKind::semantic;
            out.values.resize(static_cast<Eigen::Index>(order.size()), caps.values.cols());
            for (std::size_t i = 0; i < order.size(); ++i) {
                const auto& idx = rows[order[i]];
                RowMatrix group(static_cast<Eigen::Index>(idx.size()), caps.values.cols());
                for (std::size_t k = 0; k < idx.size(); ++k) group.row(static_cast<Eigen::Index>(k)) = caps.values.row(idx[k]);
                out.values.row(static_cast<Eigen::Index>(i)) = mean_caption_embedding(group).transpose();
            }
            out.item_ids = order;
            write_embeddings(o->out, out);
            run.report()["items"] = order.size();
            run.report()["captions"] = caps.size();
        } else {
            run.input(o->annotations);
            const auto rows = read_csv(o->annotations);
            if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "item_id")
                throw ValidationError(kModule, o->annotations + ": expected header item_id,categories");
            std::vector<std::string> ids;
            std::vector<std::vector<std::string>> ann;
            std::set<std::string> all;
            for (std::size_t i = 1; i < rows.size(); ++i) {
                ids.push_back(rows[i][0]);
                ann.push_back(rows[i].size() > 1 ? split_list(rows[i][1], ';') : std::vector<std::string>{});
                all.insert(ann.back().begin(), ann.back().end());
            }
            std::vector<std::string> vocab(all.begin(), all.end());
            if (!o->vocabulary.empty()) {
                run.input(o->vocabulary);
                vocab.clear();
                for (auto& line : read_lines(o->vocabulary))
                    if (!line.empty()) vocab.push_back(line);
            }
            write_embeddings(o->out, build_multihot(ann, vocab, ids, &diag));
            run.report()["items"] = ids.size();
            run.report()["categories"] = vocab.size();
        }
        run.output(o->out);
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_rdm(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string embeddings, betas, metric = "cosine", ids, out;
        int reps = 3;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("rdm", "Build an RDM from embeddings or whole-pattern responses");
    auto* a = cmd.app;
    a->add_option("--embeddings", o->embeddings, "EMB1 model embeddings")->check(CLI::ExistingFile);
    a->add_option("--betas", o->betas, "BET1 responses (all voxels form the pattern)")->check(CLI::ExistingFile);
    a->add_option("--metric", o->metric, "cosine or correlation");
    a->add_option("--ids", o->ids, "Text file restricting and ordering the conditions")->check(CLI::ExistingFile);
    a->add_option("--reps", o->reps, "Required repetitions per condition (raw betas)");
    cmd.need(a->add_option("--out", o->out, "Output RDM1 file"));
    cmd.body = [=](Run& run) {
        if (o->embeddings.empty() == o->betas.empty())
            throw ValidationError(kModule, "rdm takes exactly one of --embeddings, --betas");
        const Metric metric = parse_metric(o->metric);
        Diagnostics diag;
        RowMatrix patterns;
        std::vector<std::string> ids;
        if (!o->embeddings.empty()) {
            run.input(o->embeddings);
            EmbeddingMatrix e = read_embeddings(o->embeddings);
            patterns = std::move(e.values);
            ids = std::move(e.item_ids);
        } else {
            run.input(o->betas);
            ConditionResponses r = load_responses(o->betas, o->reps, &diag);
            patterns = std::move(r.responses);
            ids = std::move(r.conditions);
        }
        if (!o->ids.empty()) {
            run.input(o->ids);
            std::vector<std::string> wanted;
            for (auto& line : read_lines(o->ids))
                if (!line.empty()) wanted.push_back(line);
            EmbeddingMatrix tmp;
            tmp.values = std::move(patterns);
            tmp.item_ids = ids;
            patterns = rows_for_ids(tmp, wanted);
            ids = std::move(wanted);
        }
        const Rdm rdm = build_rdm(patterns, metric, ids, &diag);
        write_rdm(o->out, rdm, metric);
        run.output(o->out);
        run.report()["conditions"] = rdm.size();
        run.report()["utv_length"] = utv_length(rdm.size());
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_searchlight(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string betas, model_rdm, mask, out;
        double radius = 5.0;
        std::size_t split_size = 100;
        std::uint64_t seed = 0;
        int reps = 3;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("searchlight", "Per-split RSA searchlight correlation maps with t statistics");
    auto* a = cmd.app;
    cmd.need(a->add_option("--betas", o->betas, "BET1 responses")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--model-rdm", o->model_rdm, "RDM1 model RDM")->check(CLI::ExistingFile));
    a->add_option("--radius", o->radius, "Sphere radius in voxels");
    a->add_option("--split-size", o->split_size, "Conditions per split");
    cmd.need(a->add_option("--seed", o->seed, "Split seed"));
    a->add_option("--mask", o->mask, "VOL1 analysis mask (nonzero voxels)")->check(CLI::ExistingFile);
    a->add_option("--reps", o->reps, "Required repetitions per condition (raw betas)");
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        run.set_seed(o->seed);
        Diagnostics diag;
        const SpatialResponses s = load_spatial(run, o->betas, o->mask, o->reps, &diag);
        run.input(o->model_rdm);
        const RdmFile model = read_rdm(o->model_rdm);
        const SearchlightIndex index = build_sphere_index(s.grid, s.mask, o->radius);
        const SplitPlan plan = make_split_plan(s.responses.condition_count(), o->split_size, o->seed);
        const auto per_split = searchlight_correlation(s.responses, model.rdm, index, plan, &diag);
        const fs::path out = o->out;
        for (std::size_t i = 0; i < per_split.size(); ++i) write_vol(run, out / split_name(i), per_split[i]);
        const Volume mean = mean_volume(per_split);
        write_vol(run, out / "mean.vol", mean);
        if (per_split.size() >= 3) write_vol(run, out / "t.vol", tstat_volume(per_split, &diag));
        write_mask(out / "mask.vol", mean);
        run.output(out / "mask.vol");

        std::size_t peak = index.centers.front();
        for (std::size_t c : index.centers)
            if (mean.values[c] > mean.values[peak]) peak = c;
        const auto pc = s.grid.coord(peak);
        run.report()["splits"] = per_split.size();
        run.report()["unused_conditions"] = plan.unused.size();
        run.report()["centers"] = index.centers.size();
        run.report()["peak"] = {pc[0], pc[1], pc[2]};
        run.report()["peak_mean_correlation"] = mean.values[peak];
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_group(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::vector<std::string> maps;
        double alpha = 0.001;
        std::string correction = "bonferroni", out;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("group", "Voxel-wise one-sided t test across subject maps");
    auto* a = cmd.app;
    cmd.need(a->add_option("--maps", o->maps, "Per-subject VOL1 maps")->check(CLI::ExistingFile));
    a->add_option("--alpha", o->alpha, "Family-wise error rate");
    a->add_option("--correction", o->correction, "bonferroni or none");
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        Diagnostics diag;
        const GroupStats g = group_stats(read_maps(run, o->maps), o->alpha, parse_correction(o->correction), &diag);
        const fs::path out = o->out;
        write_vol(run, out / "mean.vol", g.mean);
        write_vol(run, out / "t.vol", g.t);
        write_vol(run, out / "threshold.vol", g.threshold);
        std::size_t passing = 0;
        for (double v : g.threshold.values) passing += v == 1.0;
        run.report()["subjects"] = o->maps.size();
        run.report()["tests"] = g.tests;
        run.report()["critical_t"] = g.critical_t;
        run.report()["significant_voxels"] = passing;
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_contrast(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::vector<std::string> maps, names;
        std::string out;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("contrast", "Pairwise difference maps a - b for every pair of inputs");
    auto* a = cmd.app;
    cmd.need(a->add_option("--maps", o->maps, "VOL1 maps (two or more)")->check(CLI::ExistingFile));
    a->add_option("--names", o->names, "Map names (default: file stems)");
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        if (o->maps.size() < 2) throw ValidationError(kModule, "contrast needs at least two maps");
        if (!o->names.empty() && o->names.size() != o->maps.size())
            throw ValidationError(kModule, "--names must match --maps in count");
        const auto maps = read_maps(run, o->maps);
        std::vector<std::string> names = o->names;
        if (names.empty()) {
            std::set<std::string> stems;
            for (const auto& p : o->maps) stems.insert(fs::path(p).stem().string());
            // Clashing stems get their directory name as a prefix.
            for (const auto& p : o->maps) {
                const fs::path f(p);
                names.push_back(stems.size() == o->maps.size()
                                    ? f.stem().string()
                                    : f.parent_path().filename().string() + "_" + f.stem().string());
            }
        }
        std::vector<std::pair<std::string, Volume>> named;
        for (std::size_t i = 0; i < maps.size(); ++i) named.emplace_back(names[i], maps[i]);
        for (const auto& [name, vol] : map_contrast_suite(named)) write_vol(run, fs::path(o->out) / (name + ".vol"), vol);
    };
    commands.push_back(std::move(cmd));
}

void add_decode_fit(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string betas, embeddings, fractions = "0.05:1:0.05", out;
        std::uint64_t seed = 0;
        int reps = 3;
        bool no_center = false;
        SplitOptions split;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("decode-fit", "Fit a fractional ridge map from responses to embeddings");
    auto* a = cmd.app;
    cmd.need(a->add_option("--betas", o->betas, "BET1 responses")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--embeddings", o->embeddings, "EMB1 target embeddings")->check(CLI::ExistingFile));
    a->add_option("--fractions", o->fractions, "Fraction grid: list a,b,c or start:stop:step");
    cmd.need(a->add_option("--seed", o->seed, "Split seed"));
    a->add_option("--reps", o->reps, "Required repetitions per condition (raw betas)");
    a->add_flag("--no-center", o->no_center, "Fit without centering");
    add_split_options(cmd, o->split);
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        run.set_seed(o->seed);
        Diagnostics diag;
        run.input(o->betas);
        const ConditionResponses r = load_responses(o->betas, o->reps, &diag);
        run.input(o->embeddings);
        const EmbeddingMatrix e = read_embeddings(o->embeddings);
        const DataSplit split = build_split(run, o->split, shared_ids(r, e), o->seed);
        FracridgeOptions fo;
        fo.center = !o->no_center;
        fo.seed = o->seed;
        FracridgeModel model = fracridge_fit(response_rows(r, split.train), rows_for_ids(e, split.train),
                                             parse_fraction_grid(o->fractions), fo);
        model = select_fractions(std::move(model), response_rows(r, split.test), rows_for_ids(e, split.test), &diag);
        const fs::path out = o->out;
        write_fracridge(out / "model.frr", model);
        run.output(out / "model.frr");
        write_split_csv(run, out / "split.csv", split);
        std::map<std::string, std::size_t> chosen;
        for (double f : model.chosen_fraction) ++chosen[format_double(f)];
        run.report()["train"] = split.train.size();
        run.report()["test"] = split.test.size();
        run.report()["validation"] = split.validation.size();
        run.report()["chosen_fractions"] = chosen;
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_decode_predict(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string model, betas, split, set = "validation", out;
        int reps = 3;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("decode-predict", "Predict embeddings from responses with a fitted model");
    auto* a = cmd.app;
    cmd.need(a->add_option("--model", o->model, "FRR1 model")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--betas", o->betas, "BET1 responses")->check(CLI::ExistingFile));
    a->add_option("--split", o->split, "split.csv from decode-fit (default: every condition)")->check(CLI::ExistingFile);
    a->add_option("--set", o->set, "Which split set to predict");
    a->add_option("--reps", o->reps, "Required repetitions per condition (raw betas)");
    cmd.need(a->add_option("--out", o->out, "Output EMB1 of predicted embeddings"));
    cmd.body = [=](Run& run) {
        run.input(o->model);
        const FracridgeModel model = read_fracridge(o->model);
        run.input(o->betas);
        const ConditionResponses r = load_responses(o->betas, o->reps);
        std::vector<std::string> ids = r.conditions;
        if (!o->split.empty()) {
            run.input(o->split);
            ids = read_split_set(o->split, o->set);
        }
        EmbeddingMatrix pred;
        pred.values = predict(model, response_rows(r, ids));
        pred.item_ids = ids;
        write_embeddings(o->out, pred);
        run.output(o->out);
        run.report()["items"] = ids.size();
    };
    commands.push_back(std::move(cmd));
}

void add_gain(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string predicted, embeddings, out, histogram;
        int bins = 40;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("gain", "Prediction accuracy gain of predicted against true embeddings");
    auto* a = cmd.app;
    cmd.need(a->add_option("--predicted", o->predicted, "EMB1 predictions")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--embeddings", o->embeddings, "EMB1 true embeddings")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--out", o->out, "Per-item CSV"));
    a->add_option("--histogram", o->histogram, "Optional histogram CSV over [-2, 2]");
    a->add_option("--bins", o->bins, "Histogram bins")->check(CLI::PositiveNumber);
    cmd.body = [=](Run& run) {
        run.input(o->predicted);
        const EmbeddingMatrix pred = read_embeddings(o->predicted);
        run.input(o->embeddings);
        const EmbeddingMatrix truth = read_embeddings(o->embeddings);
        const RowMatrix target = rows_for_ids(truth, pred.item_ids);
        Diagnostics diag;
        const RowMatrix c = row_correlation_matrix(pred.values, target, &diag);
        const auto gain = prediction_accuracy_gain(pred.values, target);
        CsvWriter csv(o->out);
        csv.field("item_id").field("target_correlation").field("mean_offtarget_correlation").field("gain").end_row();
        double total = 0.0;
        for (std::size_t i = 0; i < gain.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            csv.field(pred.item_ids[i]).field(c(ii, ii)).field(c(ii, ii) - gain[i]).field(gain[i]).end_row();
            total += gain[i];
        }
        csv.close();
        run.output(o->out);
        if (!o->histogram.empty()) {
            std::vector<std::size_t> counts(static_cast<std::size_t>(o->bins), 0);
            const double width = 4.0 / o->bins;
            for (double g : gain) {
                auto b = static_cast<long>(std::floor((g + 2.0) / width));
                b = std::clamp(b, 0L, static_cast<long>(o->bins) - 1);
                ++counts[static_cast<std::size_t>(b)];
            }
            CsvWriter h(o->histogram);
            h.field("bin_low").field("bin_high").field("count").end_row();
            for (int b = 0; b < o->bins; ++b)
                h.field(-2.0 + b * width).field(-2.0 + (b + 1) * width).field(counts[static_cast<std::size_t>(b)]).end_row();
            h.close();
            run.output(o->histogram);
        }
        run.report()["items"] = gain.size();
        run.report()["mean_gain"] = gain.empty() ? 0.0 : total / static_cast<double>(gain.size());
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_build_store(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string embeddings, sentences, out;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("build-store", "Build a DIC1 dictionary from embeddings and sentences");
    auto* a = cmd.app;
    cmd.need(a->add_option("--embeddings", o->embeddings, "EMB1 dictionary embeddings")->check(CLI::ExistingFile));
    a->add_option("--sentences", o->sentences, "Text file, one sentence per line (default: item ids)")
        ->check(CLI::ExistingFile);
    cmd.need(a->add_option("--out", o->out, "Output DIC1 file"));
    cmd.body = [=](Run& run) {
        run.input(o->embeddings);
        const EmbeddingMatrix e = read_embeddings(o->embeddings);
        std::vector<std::string> text = e.item_ids;
        if (!o->sentences.empty()) {
            run.input(o->sentences);
            text = read_lines(o->sentences);
            if (text.size() != e.size())
                throw DimensionError(kModule, "sentence count " + std::to_string(text.size()) +
                                                  " does not match embedding count " + std::to_string(e.size()));
        }
        const EmbeddingStore store = build_store(e.values, std::move(text));
        write_store(o->out, store);
        run.output(o->out);
        run.report()["entries"] = store.count();
        run.report()["rejected_zero_norm"] = store.rejected().size();
    };
    commands.push_back(std::move(cmd));
}

void add_lookup(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string store, queries, out;
        std::size_t topk = 1;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("lookup", "Exact cosine top-k dictionary lookup for query embeddings");
    auto* a = cmd.app;
    cmd.need(a->add_option("--store", o->store, "DIC1 dictionary")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--queries", o->queries, "EMB1 query embeddings")->check(CLI::ExistingFile));
    a->add_option("--topk", o->topk, "Neighbors per query")->check(CLI::PositiveNumber);
    cmd.need(a->add_option("--out", o->out, "Output CSV"));
    cmd.body = [=](Run& run) {
        run.input(o->store);
        const EmbeddingStore store = open_store(o->store);
        run.input(o->queries);
        const EmbeddingMatrix q = read_embeddings(o->queries);
        const auto results = batch_nearest(store, q.values, o->topk);
        CsvWriter csv(o->out);
        csv.field("query_id").field("rank").field("similarity").field("sentence").end_row();
        for (std::size_t i = 0; i < results.size(); ++i)
            for (std::size_t r = 0; r < results[i].size(); ++r)
                csv.field(q.item_ids[i]).field(r + 1).field(results[i][r].similarity).field(results[i][r].sentence).end_row();
        csv.close();
        run.output(o->out);
        run.report()["queries"] = q.size();
        run.report()["entries"] = store.count();
    };
    commands.push_back(std::move(cmd));
}

void add_encode(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string betas, embeddings, fractions = "0.05:1:0.05", out;
        std::uint64_t seed = 0;
        int reps = 3;
        SplitOptions split;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("encode", "Voxelwise encoding model from embeddings to responses");
    auto* a = cmd.app;
    cmd.need(a->add_option("--betas", o->betas, "BET1 responses")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--embeddings", o->embeddings, "EMB1 embeddings")->check(CLI::ExistingFile));
    a->add_option("--fractions", o->fractions, "Fraction grid: list a,b,c or start:stop:step");
    cmd.need(a->add_option("--seed", o->seed, "Split seed"));
    a->add_option("--reps", o->reps, "Required repetitions per condition (raw betas)");
    add_split_options(cmd, o->split);
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        run.set_seed(o->seed);
        Diagnostics diag;
        run.input(o->betas);
        const ConditionResponses r = load_responses(o->betas, o->reps, &diag);
        run.input(o->embeddings);
        const EmbeddingMatrix e = read_embeddings(o->embeddings);
        const DataSplit split = build_split(run, o->split, shared_ids(r, e), o->seed);
        const EncodingResult enc = encode_voxelwise(e, r, split, parse_fraction_grid(o->fractions), &diag);
        const fs::path out = o->out;
        write_vol(run, out / "encoding.vol", enc.pearson);
        write_fracridge(out / "model.frr", enc.model);
        run.output(out / "model.frr");
        write_split_csv(run, out / "split.csv", split);
        double best = -1.0;
        for (double v : enc.voxel_pearson) best = std::max(best, v);
        run.report()["voxels"] = enc.voxel_pearson.size();
        run.report()["max_voxel_pearson"] = best;
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_rcnn_init(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string spec, out;
        std::uint64_t seed = 0;
        double recurrent_scale = 0.1;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("rcnn-init", "Write a spec and randomly initialized recurrent network weights");
    auto* a = cmd.app;
    a->add_option("--spec", o->spec, "RCS1 spec (default: the ten-layer desk network)")->check(CLI::ExistingFile);
    cmd.need(a->add_option("--seed", o->seed, "Initialization seed"));
    a->add_option("--recurrent-scale", o->recurrent_scale, "Scale of lateral and top-down kernels");
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        run.set_seed(o->seed);
        RcnnSpec spec = RcnnSpec::desk_default();
        if (!o->spec.empty()) {
            run.input(o->spec);
            spec = read_spec(o->spec);
        }
        const fs::path out = o->out;
        write_spec(out / "spec.json", spec);
        run.output(out / "spec.json");
        write_weights(out / "weights.rcw", random_weights(spec, o->seed, o->recurrent_scale), spec);
        run.output(out / "weights.rcw");
        run.report()["layers"] = spec.layers.size();
        run.report()["timesteps"] = spec.timesteps;
    };
    commands.push_back(std::move(cmd));
}

void add_rcnn_extract(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string spec, weights, images, layers, timesteps, out;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("rcnn-extract", "Per-layer, per-timestep activation RDMs over a directory of images");
    auto* a = cmd.app;
    cmd.need(a->add_option("--spec", o->spec, "RCS1 spec")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--weights", o->weights, "RCW1 weights")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--images", o->images, "Directory of binary PPM images")->check(CLI::ExistingDirectory));
    a->add_option("--layers", o->layers, "1-based layers, comma separated (default: all)");
    a->add_option("--timesteps", o->timesteps, "1-based timesteps, comma separated (default: all)");
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        run.input(o->spec);
        RcnnSpec spec = read_spec(o->spec);
        run.input(o->weights);
        const RcnnWeights weights = read_weights(o->weights, spec);
        std::vector<FeatureMap> images;
        std::vector<ConditionId> ids;
        for (const auto& p : files_with_extension(o->images, ".ppm")) {
            run.input(p);
            images.push_back(read_ppm(p));
            ids.push_back(p.stem().string());
        }
        std::vector<int> layers = parse_int_list(o->layers, "--layers");
        std::vector<int> steps = parse_int_list(o->timesteps, "--timesteps");
        if (layers.empty())
            for (int l = 1; l <= static_cast<int>(spec.layers.size()); ++l) layers.push_back(l);
        if (steps.empty())
            for (int t = 1; t <= spec.timesteps; ++t) steps.push_back(t);
        Diagnostics diag;
        for (const auto& lr : layer_rdms(images, ids, weights, spec, layers, steps, &diag)) {
            char name[48];
            std::snprintf(name, sizeof name, "layer%02d_t%d.rdm", lr.layer, lr.timestep);
            const fs::path p = fs::path(o->out) / name;
            write_rdm(p, lr.rdm, Metric::cosine);
            run.output(p);
        }
        run.report()["images"] = images.size();
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

void add_nnls_fit(CLI::App& app, std::vector<Command>& commands) {
    struct Opts {
        std::string betas, predictor_rdms, mask, out;
        double radius = 5.0;
        std::size_t split_size = 100, train = 70;
        std::uint64_t seed = 0;
        int reps = 3;
        bool intercept = false;
    };
    auto o = std::make_shared<Opts>();
    Command cmd;
    cmd.app = app.add_subcommand("nnls-fit", "Cross-validated non-negative reweighting of predictor RDMs");
    auto* a = cmd.app;
    cmd.need(a->add_option("--betas", o->betas, "BET1 responses")->check(CLI::ExistingFile));
    cmd.need(a->add_option("--predictor-rdms", o->predictor_rdms, "Directory of RDM1 predictor files")
                 ->check(CLI::ExistingDirectory));
    a->add_option("--radius", o->radius, "Sphere radius in voxels");
    a->add_option("--split-size", o->split_size, "Conditions per split");
    a->add_option("--train", o->train, "Training conditions per split");
    cmd.need(a->add_option("--seed", o->seed, "Split seed"));
    a->add_option("--mask", o->mask, "VOL1 analysis mask (nonzero voxels)")->check(CLI::ExistingFile);
    a->add_option("--reps", o->reps, "Required repetitions per condition (raw betas)");
    a->add_flag("--intercept", o->intercept, "Fit an unconstrained offset");
    cmd.need(a->add_option("--out", o->out, "Output directory"));
    cmd.body = [=](Run& run) {
        run.set_seed(o->seed);
        Diagnostics diag;
        const SpatialResponses s = load_spatial(run, o->betas, o->mask, o->reps, &diag);
        std::vector<Rdm> predictors;
        std::vector<std::string> names;
        for (const auto& p : files_with_extension(o->predictor_rdms, ".rdm")) {
            run.input(p);
            predictors.push_back(read_rdm(p).rdm);
            names.push_back(p.stem().string());
        }
        const SearchlightIndex index = build_sphere_index(s.grid, s.mask, o->radius);
        const SplitPlan plan = make_split_plan(s.responses.condition_count(), o->split_size, o->seed);
        CvFitOptions fo;
        fo.train_count = o->train;
        fo.intercept = o->intercept;
        const CvFitResult fit = cv_rdm_reweight(predictors, s.responses, index, plan, fo, &diag);
        const fs::path out = o->out;
        for (std::size_t i = 0; i < fit.per_split.size(); ++i) write_vol(run, out / split_name(i), fit.per_split[i]);
        write_vol(run, out / "mean.vol", fit.mean);
        CsvWriter csv(out / "weights.csv");
        csv.field("x").field("y").field("z");
        for (const auto& n : names) csv.field(n);
        csv.end_row();
        for (std::size_t c = 0; c < fit.centers.size(); ++c) {
            const auto xyz = s.grid.coord(fit.centers[c]);
            csv.field(xyz[0]).field(xyz[1]).field(xyz[2]);
            for (Eigen::Index k = 0; k < fit.mean_weights.cols(); ++k)
                csv.field(fit.mean_weights(static_cast<Eigen::Index>(c), k));
            csv.end_row();
        }
        csv.close();
        run.output(out / "weights.csv");
        run.report()["predictors"] = names;
        run.report()["splits"] = fit.per_split.size();
        run.report()["train_pairs"] = fit.train_pairs;
        run.report()["test_pairs"] = fit.test_pairs;
        run.report()["degeneracies"] = degeneracy_report(diag);
    };
    commands.push_back(std::move(cmd));
}

}  // namespace

void register_commands(CLI::App& app, std::vector<Command>& commands) {
    add_synth(app, commands);
    add_ingest(app, commands);
    add_rdm(app, commands);
    add_searchlight(app, commands);
    add_group(app, commands);
    add_contrast(app, commands);
    add_decode_fit(app, commands);
    add_decode_predict(app, commands);
    add_gain(app, commands);
    add_build_store(app, commands);
    add_lookup(app, commands);
    add_encode(app, commands);
    add_rcnn_init(app, commands);
    add_rcnn_extract(app, commands);
    add_nnls_fit(app, commands);
}

}  // namespace semrsa::cli
