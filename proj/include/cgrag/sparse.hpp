#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cgrag/corpus.hpp"

namespace cgrag {

using TermId = std::uint32_t;

/// Term-impact vector. Entries are sorted by term id, strictly positive.
class SparseVector {
public:
    using Entry = std::pair<TermId, double>;

    SparseVector() = default;
    /// Sorts, merges duplicates by summation and drops non-positive weights.
    explicit SparseVector(std::vector<Entry> entries);

    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    /// Weight of a term, 0 if absent.
    [[nodiscard]] double weight(TermId t) const;

    bool operator==(const SparseVector&) const = default;

private:
    std::vector<Entry> entries_;
};

/// Exact sparse dot product (merge join over sorted term ids).
double f_sparse(const SparseVector& a, const SparseVector& b);

/// Produces lexical representations. A learned sparse encoder can implement
/// the same surface.
class SparseEncoder {
public:
    virtual ~SparseEncoder() = default;
    [[nodiscard]] virtual SparseVector encode_chunk(std::span<const std::string> tokens) const = 0;
    [[nodiscard]] virtual SparseVector encode_query(std::string_view query_text) const = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// BM25 statistics over a chunk collection, factored so that
/// f_sparse(encode_query(q), encode_chunk(c)) equals the BM25 score of c for q.
///
/// chunk side: tf*(k1+1) / (tf + k1*(1 - b + b*len/avg_len))
/// query side: ln(1 + (N - df + 0.5) / (df + 0.5)) per distinct in-vocabulary term
class SparseIndex final : public SparseEncoder {
public:
    static constexpr int kFormatVersion = 1;

    SparseIndex() = default;

    /// Throws InputError on an empty collection.
    static SparseIndex fit(std::span<const Chunk> chunks, Bm25Params params = {});
    static SparseIndex fit_tokens(std::span<const std::vector<std::string>> docs, Bm25Params params = {});

    [[nodiscard]] SparseVector encode_chunk(std::span<const std::string> tokens) const override;
    [[nodiscard]] SparseVector encode_chunk(const Chunk& chunk) const { return encode_chunk(chunk.tokens); }
    [[nodiscard]] SparseVector encode_query(std::string_view query_text) const override;
    [[nodiscard]] std::string id() const override;

    [[nodiscard]] double idf(TermId t) const;
    [[nodiscard]] std::optional<TermId> term_id(std::string_view term) const;

    [[nodiscard]] const std::map<std::string, TermId, std::less<>>& vocabulary() const noexcept { return vocab_; }
    [[nodiscard]] const std::vector<std::uint32_t>& doc_freq() const noexcept { return doc_freq_; }
    [[nodiscard]] double avg_chunk_len() const noexcept { return avg_len_; }
    [[nodiscard]] std::uint64_t chunk_count() const noexcept { return chunk_count_; }
    [[nodiscard]] const Bm25Params& params() const noexcept { return params_; }

    void save(const std::filesystem::path& path) const;
    static SparseIndex load(const std::filesystem::path& path);

    bool operator==(const SparseIndex&) const;

private:
    std::map<std::string, TermId, std::less<>> vocab_;
    std::vector<std::uint32_t> doc_freq_;
    double avg_len_ = 0.0;
    std::uint64_t chunk_count_ = 0;
    Bm25Params params_;
};

}  // namespace cgrag
