#include "semrsa/dictionary.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <queue>

#include "semrsa/binary_format.hpp"
#include "semrsa/error.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "dictionary_lookup";

struct OwnedStore {
    std::vector<float> vectors;
    std::vector<float> norms;
    std::vector<std::uint64_t> offsets;
    std::vector<char> blob;
};

std::size_t padded8(std::size_t n) { return (n + 7) / 8 * 8; }

// Bound on |float blocked dot - reference dot| for unit vectors of length
// `dim`: gamma_dim for the float accumulation plus the rounding of the query.
double screening_error(std::size_t dim) {
    const double u = 0x1.0p-24;
    const double nu = static_cast<double>(dim) * u;
    return 1.001 * nu / (1.0 - nu) + 4.0 * u;
}

bool better(const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.index < b.index;
}

}  // namespace

std::string_view EmbeddingStore::sentence(std::size_t i) const {
    if (i >= count_) throw DimensionError(kModule, "store index out of range");
    const std::uint64_t at = offsets_[i];
    std::uint32_t len = 0;
    std::memcpy(&len, sentence_bytes_.data() + at, sizeof len);
    if constexpr (std::endian::native != std::endian::little) len = __builtin_bswap32(len);
    return {sentence_bytes_.data() + at + sizeof len, len};
}

EmbeddingStore build_store(std::vector<float> embeddings, std::size_t dim, std::vector<std::string> sentences) {
    if (dim == 0) throw ValidationError(kModule, "store dimension must be positive");
    if (embeddings.size() % dim != 0) throw DimensionError(kModule, "embedding buffer is not a multiple of d");
    const std::size_t k = embeddings.size() / dim;
    if (k == 0) throw ValidationError(kModule, "store needs at least one entry");
    if (sentences.size() != k)
        throw ValidationError(kModule, "sentence count " + std::to_string(sentences.size()) +
                                           " differs from embedding count " + std::to_string(k));

    auto owned = std::make_shared<OwnedStore>();
    EmbeddingStore store;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < k; ++i) {
        float* row = embeddings.data() + i * dim;
        double ss = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            if (!std::isfinite(row[j])) throw ValidationError(kModule, "embedding " + std::to_string(i) + " is not finite");
            ss += static_cast<double>(row[j]) * row[j];
        }
        if (ss == 0.0) {
            store.rejected_.push_back(i);
            continue;
        }
        const double norm = std::sqrt(ss);
        float* dst = embeddings.data() + kept * dim;
        for (std::size_t j = 0; j < dim; ++j) dst[j] = static_cast<float>(row[j] / norm);
        owned->norms.push_back(static_cast<float>(norm));
        store.source_.push_back(i);
        if (kept != i) sentences[kept] = std::move(sentences[i]);
        ++kept;
    }
    if (kept == 0) throw ValidationError(kModule, "every store entry has zero norm");
    embeddings.resize(kept * dim);
    embeddings.shrink_to_fit();
    owned->vectors = std::move(embeddings);
    for (std::size_t i = 0; i < kept; ++i) {
        owned->offsets.push_back(owned->blob.size());
        const auto len = static_cast<std::uint32_t>(sentences[i].size());
        const auto* p = reinterpret_cast<const char*>(&len);
        owned->blob.insert(owned->blob.end(), p, p + sizeof len);
        owned->blob.insert(owned->blob.end(), sentences[i].begin(), sentences[i].end());
    }
    owned->offsets.push_back(owned->blob.size());

    store.count_ = kept;
    store.dim_ = dim;
    store.vectors_ = owned->vectors;
    store.norms_ = owned->norms;
    store.offsets_ = owned->offsets;
    store.sentence_bytes_ = owned->blob;
    store.storage_ = std::move(owned);
    return store;
}

EmbeddingStore build_store(const RowMatrix& embeddings, std::vector<std::string> sentences) {
    std::vector<float> buffer(static_cast<std::size_t>(embeddings.size()));
    for (Eigen::Index i = 0; i < embeddings.size(); ++i) buffer[static_cast<std::size_t>(i)] = static_cast<float>(embeddings.data()[i]);
    return build_store(std::move(buffer), static_cast<std::size_t>(embeddings.cols()), std::move(sentences));
}

double reference_similarity(const EmbeddingStore& store, std::span<const double> unit_query, std::size_t i) {
    const auto v = store.vector(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) acc += static_cast<double>(v[j]) * unit_query[j];
    return acc;
}

std::vector<double> normalize_query(std::span<const double> query) {
    double ss = 0.0;
    for (double x : query) {
        if (!std::isfinite(x)) throw ValidationError(kModule, "query is not finite");
        ss += x * x;
    }
    if (ss == 0.0) throw ValidationError(kModule, "query has zero norm");
    const double norm = std::sqrt(ss);
    std::vector<double> out(query.size());
    for (std::size_t j = 0; j < query.size(); ++j) out[j] = query[j] / norm;
    return out;
}

std::vector<std::vector<Neighbor>> batch_nearest(const EmbeddingStore& store, const RowMatrix& queries,
                                                 std::size_t k, const SearchOptions& options) {
    const std::size_t dim = store.dim();
    if (static_cast<std::size_t>(queries.cols()) != dim)
        throw DimensionError(kModule, "query dimension differs from store dimension");
    const auto nq = static_cast<std::size_t>(queries.rows());
    std::vector<std::vector<Neighbor>> results(nq);
    if (nq == 0 || k == 0) return results;
    k = std::min(k, store.count());

    std::vector<std::vector<double>> unit(nq);
    RowMatrixF qf(static_cast<Eigen::Index>(nq), static_cast<Eigen::Index>(dim));
    for (std::size_t q = 0; q < nq; ++q) {
        unit[q] = normalize_query(std::span<const double>(queries.row(static_cast<Eigen::Index>(q)).data(), dim));
        for (std::size_t j = 0; j < dim; ++j) qf(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(j)) = static_cast<float>(unit[q][j]);
    }

    const double margin = 2.0 * screening_error(dim);
    const std::size_t block = std::max<std::size_t>(1, options.block_rows);
    const std::size_t blocks = (store.count() + block - 1) / block;
    using MinHeap = std::priority_queue<float, std::vector<float>, std::greater<float>>;

    // Per-query merged state: float top-k values and screened candidates.
    std::vector<std::vector<float>> top_all(nq);
    std::vector<std::vector<std::pair<float, std::size_t>>> cand_all(nq);

#pragma omp parallel
    {
        std::vector<MinHeap> heaps(nq);
        std::vector<std::vector<std::pair<float, std::size_t>>> cands(nq);
        RowMatrixF sims;
#pragma omp for schedule(static)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
            const std::size_t begin = static_cast<std::size_t>(b) * block;
            const std::size_t rows = std::min(block, store.count() - begin);
            const Eigen::Map<const RowMatrixF> entries(store.vectors().data() + begin * dim,
                                                       static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
            sims.noalias() = qf * entries.transpose();
            for (std::size_t q = 0; q < nq; ++q) {
                auto& heap = heaps[q];
                const float* row = sims.row(static_cast<Eigen::Index>(q)).data();
                for (std::size_t i = 0; i < rows; ++i) {
                    if (heap.size() < k) heap.push(row[i]);
                    else if (row[i] > heap.top()) {
                        heap.pop();
                        heap.push(row[i]);
                    }
                }
                const double tau = heap.size() < k ? -std::numeric_limits<double>::infinity() : heap.top();
                auto& c = cands[q];
                for (std::size_t i = 0; i < rows; ++i)
                    if (static_cast<double>(row[i]) >= tau - margin) c.emplace_back(row[i], begin + i);
                if (c.size() > 4 * k + 1024) {
                    std::erase_if(c, [&](const auto& e) { return static_cast<double>(e.first) < tau - margin; });
                }
            }
        }
#pragma omp critical
        for (std::size_t q = 0; q < nq; ++q) {
            while (!heaps[q].empty()) {
                top_all[q].push_back(heaps[q].top());
                heaps[q].pop();
            }
            cand_all[q].insert(cand_all[q].end(), cands[q].begin(), cands[q].end());
        }
    }

    for (std::size_t q = 0; q < nq; ++q) {
        auto& top = top_all[q];
        std::sort(top.begin(), top.end(), std::greater<float>());
        const double tau = static_cast<double>(top[k - 1]);
        std::vector<Neighbor> rescored;
        for (const auto& [sim, index] : cand_all[q]) {
            if (static_cast<double>(sim) < tau - margin) continue;
            rescored.push_back({index, reference_similarity(store, unit[q], index), {}});
        }
        std::sort(rescored.begin(), rescored.end(), better);
        rescored.resize(std::min(k, rescored.size()));
        for (auto& n : rescored) n.sentence = store.sentence(n.index);
        results[q] = std::move(rescored);
    }
    return results;
}

std::vector<Neighbor> nearest(const EmbeddingStore& store, std::span<const double> query, std::size_t k,
                              const SearchOptions& options) {
    RowMatrix q(1, static_cast<Eigen::Index>(query.size()));
    for (std::size_t j = 0; j < query.size(); ++j) q(0, static_cast<Eigen::Index>(j)) = query[j];
    if (query.size() != store.dim()) throw DimensionError(kModule, "query dimension differs from store dimension");
    return std::move(batch_nearest(store, q, k, options).front());
}

void write_store(const std::filesystem::path& path, const EmbeddingStore& store) {
    auto out = format::open_output(path, "DIC1");
    std::vector<char> blob;
    std::vector<std::uint64_t> offsets;
    for (std::size_t i = 0; i < store.count(); ++i) {
        offsets.push_back(blob.size());
        const std::string_view s = store.sentence(i);
        std::uint32_t len = static_cast<std::uint32_t>(s.size());
        if constexpr (std::endian::native != std::endian::little) len = __builtin_bswap32(len);
        const auto* p = reinterpret_cast<const char*>(&len);
        blob.insert(blob.end(), p, p + sizeof len);
        blob.insert(blob.end(), s.begin(), s.end());
    }
    offsets.push_back(blob.size());
    blob.resize(padded8(blob.size()), '\0');
    nlohmann::json header = {{"magic", "DIC1"},
                             {"count", store.count()},
                             {"d", store.dim()},
                             {"sentence_bytes", blob.size()}};
    format::write_header(out, header);
    format::write_f32(out, store.vectors());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    for (std::uint64_t o : offsets) format::write_u64(out, o);
    format::write_f32(out, store.original_norms());
    if (!out) throw IoError(kModule, "failed writing " + path.string());
}

EmbeddingStore open_store(const std::filesystem::path& path) {
    if constexpr (std::endian::native != std::endian::little)
        throw IoError(kModule, "memory-mapped DIC1 stores need a little-endian host");
    auto mapped = std::make_shared<format::MappedFile>(path);
    const auto bytes = mapped->bytes();
    const auto* base = reinterpret_cast<const char*>(bytes.data());
    const void* newline = std::memchr(base, '\n', bytes.size());
    if (newline == nullptr) throw ValidationError(kModule, "DIC1 header line missing");
    const std::size_t header_len = static_cast<std::size_t>(static_cast<const char*>(newline) - base) + 1;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(std::string_view(base, header_len - 1));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(kModule, std::string("DIC1 header is not JSON: ") + e.what());
    }
    if (header.value("magic", std::string{}) != "DIC1") throw ValidationError(kModule, "expected magic DIC1");
    if (header_len % 4 != 0) throw ValidationError(kModule, "DIC1 payload is not aligned");
    const auto count = format::field<std::size_t>(header, "count", "DIC1");
    const auto dim = format::field<std::size_t>(header, "d", "DIC1");
    const auto blob_len = format::field<std::size_t>(header, "sentence_bytes", "DIC1");
    const std::size_t vec_bytes = count * dim * sizeof(float);
    const std::size_t off_at = header_len + vec_bytes + blob_len;
    const std::size_t norms_at = off_at + (count + 1) * sizeof(std::uint64_t);
    if (bytes.size() < norms_at + count * sizeof(float) || off_at % 8 != 0)
        throw ValidationError(kModule, "DIC1 file " + path.string() + " is truncated or misaligned");

    EmbeddingStore store;
    store.count_ = count;
    store.dim_ = dim;
    store.vectors_ = {reinterpret_cast<const float*>(base + header_len), count * dim};
    store.sentence_bytes_ = {base + header_len + vec_bytes, blob_len};
    store.offsets_ = {reinterpret_cast<const std::uint64_t*>(base + off_at), count + 1};
    store.norms_ = {reinterpret_cast<const float*>(base + norms_at), count};
    store.source_.resize(count);
    for (std::size_t i = 0; i < count; ++i) store.source_[i] = i;
    for (std::size_t i = 0; i + 1 < store.offsets_.size(); ++i)
        if (store.offsets_[i] + sizeof(std::uint32_t) > blob_len)
            throw ValidationError(kModule, "DIC1 offset table points outside the sentence blob");
    store.storage_ = std::move(mapped);
    return store;
}

}  // namespace semrsa
