#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semrsa/matrix.hpp"

namespace semrsa {

/// Unit-normalized embedding dictionary with sentence payloads. Immutable
/// once built; either owns its buffers or views a read-only file mapping.
class EmbeddingStore {
public:
    std::size_t count() const noexcept { return count_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const float> vectors() const noexcept { return vectors_; }
    std::span<const float> vector(std::size_t i) const noexcept { return vectors_.subspan(i * dim_, dim_); }
    std::span<const float> original_norms() const noexcept { return norms_; }
    std::string_view sentence(std::size_t i) const;
    /// Input positions of entries refused at build time (zero norm).
    const std::vector<std::size_t>& rejected() const noexcept { return rejected_; }
    /// Input position of each stored entry.
    const std::vector<std::size_t>& source_index() const noexcept { return source_; }

    friend EmbeddingStore build_store(std::vector<float> embeddings, std::size_t dim,
                                      std::vector<std::string> sentences);
    friend EmbeddingStore open_store(const std::filesystem::path& path);

private:
    std::size_t count_ = 0;
    std::size_t dim_ = 0;
    std::span<const float> vectors_;
    std::span<const float> norms_;
    std::span<const std::uint64_t> offsets_;  // count + 1 entries into sentence_bytes_
    std::span<const char> sentence_bytes_;
    std::vector<std::size_t> rejected_;
    std::vector<std::size_t> source_;
    std::shared_ptr<const void> storage_;
};

/// Normalizes `embeddings` (k x dim, row-major) in place and takes ownership.
/// Zero-norm rows are dropped and reported by rejected().
EmbeddingStore build_store(std::vector<float> embeddings, std::size_t dim, std::vector<std::string> sentences);
EmbeddingStore build_store(const RowMatrix& embeddings, std::vector<std::string> sentences);

struct Neighbor {
    std::size_t index = 0;
    double similarity = 0.0;
    std::string_view sentence;

    friend bool operator==(const Neighbor& a, const Neighbor& b) {
        return a.index == b.index && a.similarity == b.similarity;
    }
};

/// Stored vector `i` dotted with the normalized query, accumulated in double
/// in index order. This is the similarity every search path reports.
double reference_similarity(const EmbeddingStore& store, std::span<const double> unit_query, std::size_t i);

/// Query scaled to unit norm in double precision; throws on a zero or
/// non-finite query.
std::vector<double> normalize_query(std::span<const double> query);

struct SearchOptions {
    std::size_t block_rows = 16384;
};

/// Exact top-k by cosine similarity, descending, ties by ascending index.
std::vector<Neighbor> nearest(const EmbeddingStore& store, std::span<const double> query, std::size_t k,
                              const SearchOptions& options = {});

/// Per-query results identical to nearest(). Float blocked products screen
/// candidates; the survivors are rescored with reference_similarity.
std::vector<std::vector<Neighbor>> batch_nearest(const EmbeddingStore& store, const RowMatrix& queries,
                                                 std::size_t k, const SearchOptions& options = {});

/// DIC1: JSON header {magic, count, d, sentence_bytes} + count*d float32
/// vectors + sentence blob (u32 length + UTF-8 bytes per entry) + offset
/// table (count u64 entry offsets into the blob) + count float32 original
/// norms.
void write_store(const std::filesystem::path& path, const EmbeddingStore& store);
/// Memory-maps a DIC1 file read-only.
EmbeddingStore open_store(const std::filesystem::path& path);

}  // namespace semrsa
