#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cgrag/corpus.hpp"
#include "cgrag/dense.hpp"
#include "cgrag/sparse.hpp"

namespace cgrag {

enum class EdgeKind : std::uint8_t { IntraAdjacency = 0, IntraCrossref = 1, InterDoc = 2 };

std::string_view to_string(EdgeKind k);
EdgeKind parse_edge_kind(std::string_view s);

/// Edge expressed with chunk ids, before node indices are assigned.
struct EdgeSpec {
    ChunkId src;
    ChunkId dst;
    EdgeKind kind;
    double weight;

    bool operator==(const EdgeSpec&) const = default;
};

/// "`from` refers to `to`" between two chunks; yields to -> from.
struct ChunkCrossRef {
    ChunkId from;
    ChunkId to;
};

/// Chunks and their sparse/dense representations, index aligned.
struct ChunkStore {
    std::vector<Chunk> chunks;
    std::vector<SparseVector> sparse;
    std::vector<DenseVector> dense;

    [[nodiscard]] std::size_t size() const noexcept { return chunks.size(); }
    [[nodiscard]] std::optional<std::size_t> find(const ChunkId& id) const;
};

/// Encode every chunk with both signals.
ChunkStore encode_chunks(std::vector<Chunk> chunks, const SparseEncoder& sparse,
                         const EmbeddingProvider& dense);

/// Adjacency edges between consecutive chunks plus one edge per cross-reference.
/// Throws InputError for a cross-reference that leaves the document.
std::vector<EdgeSpec> build_intra_edges(std::span<const Chunk> doc_chunks,
                                        std::span<const ChunkCrossRef> crossrefs = {});

/// Relevance used to pick inter-document context: sparse + dense dot products.
double chunk_relevance(const ChunkStore& store, std::size_t a, std::size_t b);

/// For every chunk of the citing document, link the `n` most relevant chunks
/// of the cited document into it. Ties go to the lower ordinal.
std::vector<EdgeSpec> build_inter_edges(const ChunkStore& store, std::span<const std::size_t> citing,
                                        std::span<const std::size_t> cited, std::size_t n);

struct GraphProvenance {
    std::string corpus_hash;
    std::size_t chunk_length = 0;
    std::size_t top_n = 0;
    double k1 = 0.0;
    double b = 0.0;
    std::string dense_provider_id;

    bool operator==(const GraphProvenance&) const = default;
};

struct Edge {
    std::uint32_t src;
    std::uint32_t dst;
    EdgeKind kind;
    double weight;

    bool operator==(const Edge&) const = default;
};

struct ContextSubgraph {
    ChunkId center;
    std::vector<ChunkId> nodes;  ///< center first, then in-neighbors in id order
    std::vector<EdgeSpec> edges;
    double score = 0.0;
};

/// Chunk-level citation graph. Nodes are sorted by chunk id; edges by
/// (dst, src, kind). Immutable once built.
class ContextualGraph {
public:
    static constexpr int kFormatVersion = 1;

    ContextualGraph() = default;
    /// Throws InputError on self edges, duplicate triples or unknown endpoints.
    ContextualGraph(std::vector<ChunkId> nodes, std::vector<EdgeSpec> edges, GraphProvenance prov);

    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
    [[nodiscard]] const std::vector<ChunkId>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<Edge>& edges() const noexcept { return edges_; }
    [[nodiscard]] const GraphProvenance& provenance() const noexcept { return prov_; }
    [[nodiscard]] std::optional<std::uint32_t> index_of(const ChunkId& id) const;
    /// Distinct message sources of node i, ascending.
    [[nodiscard]] std::span<const std::uint32_t> in_neighbors(std::uint32_t i) const { return in_[i]; }
    [[nodiscard]] std::vector<EdgeSpec> edge_specs() const;

    /// Throws InputError for an unknown id.
    [[nodiscard]] ContextSubgraph induced_subgraph(const ChunkId& center) const;

    void save(const std::filesystem::path& path) const;
    /// Reads a cache; when `expected` is given, refuses a cache built from
    /// other inputs (ProvenanceError). Bad format_version -> VersionError.
    static ContextualGraph load(const std::filesystem::path& path,
                                const std::optional<GraphProvenance>& expected = std::nullopt);
    /// One "src dst kind weight" line per edge.
    void export_text(std::ostream& out) const;

    bool operator==(const ContextualGraph& o) const {
        return nodes_ == o.nodes_ && edges_ == o.edges_ && prov_ == o.prov_;
    }

private:
    std::vector<ChunkId> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::vector<std::uint32_t>> in_;
    std::unordered_map<std::string, std::uint32_t> index_;
    GraphProvenance prov_;
};

/// Map token-level cross-references of a document to chunk pairs.
std::vector<ChunkCrossRef> chunk_crossrefs(const Document& doc, std::size_t chunk_length);

/// Intra edges for every document plus Top-n inter edges for every resolved
/// citation (cited -> citing). Deterministic.
ContextualGraph build_contextual_graph(const Corpus& corpus, const ChunkStore& store, std::size_t n,
                                       GraphProvenance prov);

}  // namespace cgrag
