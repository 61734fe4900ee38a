#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cgrag/text.hpp"

namespace cgrag {

/// Identifies a chunk as (document id, ordinal within the document).
struct ChunkId {
    std::string doc;
    std::uint32_t ordinal = 0;

    auto operator<=>(const ChunkId&) const = default;
    bool operator==(const ChunkId&) const = default;

    /// "doc#ordinal"
    [[nodiscard]] std::string str() const;
    /// Inverse of str(); splits at the last '#'. Throws InputError.
    static ChunkId parse(std::string_view s);
};

/// Explicit intra-document reference given as token positions: the token at
/// `from_token` refers to the passage containing `to_token`.
struct TokenCrossRef {
    std::size_t from_token = 0;
    std::size_t to_token = 0;
};

struct Document {
    std::string id;
    std::string title;
    std::string text;
    std::vector<Token> tokens;
    std::vector<std::string> references;
    std::vector<TokenCrossRef> crossrefs;
};

struct Chunk {
    ChunkId id;
    std::vector<std::string> tokens;
    std::size_t char_begin = 0;
    std::size_t char_end = 0;
    std::string text;  ///< raw source text of the span
};

class Corpus {
public:
    Corpus() = default;
    /// Validates unique ids and tokenizes; dangling references become warnings.
    explicit Corpus(std::vector<Document> docs);

    [[nodiscard]] const std::vector<Document>& documents() const noexcept { return docs_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    [[nodiscard]] const Document* find(std::string_view id) const;
    [[nodiscard]] std::size_t size() const noexcept { return docs_.size(); }

    /// Resolved citation pairs (cited, citing), de-duplicated, in corpus order
    /// of the citing document. Dangling and self references are excluded.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> citations() const;

    /// Stable digest of the document contents, independent of JSON field order.
    [[nodiscard]] std::string content_hash() const;

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::vector<std::string> warnings_;
};

/// Read a JSON Lines corpus: {"id","title","text","references",["crossrefs"]}.
Corpus load_corpus(const std::filesystem::path& path);

/// Build a document from raw fields (tokenizes the text).
Document make_document(std::string id, std::string title, std::string text,
                       std::vector<std::string> references = {},
                       std::vector<TokenCrossRef> crossrefs = {});

/// Split into ceil(L/l) consecutive chunks; every chunk but the last holds
/// exactly l tokens. Throws InputError for an empty body or l == 0.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t l);

struct ChunkSet {
    std::vector<Chunk> chunks;
    std::vector<std::string> warnings;
};

/// Chunk every document, skipping (with a warning) those with no tokens.
ChunkSet chunk_corpus(const Corpus& corpus, std::size_t l);

/// Ordinal of the chunk holding token `token_index` for chunk length l.
constexpr std::uint32_t chunk_of_token(std::size_t token_index, std::size_t l) {
    return static_cast<std::uint32_t>(token_index / l);
}

}  // namespace cgrag
