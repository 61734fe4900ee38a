#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cgrag/dense.hpp"
#include "cgrag/encoder.hpp"
#include "cgrag/graph.hpp"
#include "cgrag/sparse.hpp"

namespace cgrag {

/// Graph plus chunk representations re-ordered to graph node order, with the
/// dense inputs pre-converted for message passing.
class RetrievalIndex {
public:
    /// Throws InputError when a graph node has no representation in `store`.
    RetrievalIndex(ContextualGraph graph, const ChunkStore& store);

    [[nodiscard]] const ContextualGraph& graph() const noexcept { return graph_; }
    [[nodiscard]] const ChunkStore& store() const noexcept { return store_; }
    [[nodiscard]] std::size_t size() const noexcept { return store_.size(); }
    [[nodiscard]] const std::vector<Eigen::VectorXd>& inputs() const noexcept { return x_; }

    /// Whole-graph message-passing problem for the given gates.
    [[nodiscard]] MessageGraph message_graph(std::vector<double> delta) const;

private:
    ContextualGraph graph_;
    ChunkStore store_;
    std::vector<Eigen::VectorXd> x_;
};

struct QueryContext {
    std::string query;
    SparseVector q_sparse;
    DenseVector q_dense;
    std::vector<double> delta;  ///< per graph node, >= 0
};

/// delta_i = pos_map(f_sparse(q, c_i)) for every node of the index.
std::vector<double> compute_delta(const SparseVector& q_sparse, const RetrievalIndex& index, PositivityMap pos_map);

QueryContext make_query_context(std::string_view query, const SparseEncoder& sparse, const EmbeddingProvider& dense,
                                const RetrievalIndex& index, PositivityMap pos_map);

/// Edge relevances alpha_ij for every edge j -> i (query independent).
AlphaTable compute_alpha(const EncoderParams& params, const RetrievalIndex& index);

/// Entangled representations H_i for every node.
std::vector<DenseVector> propagate(const EncoderParams& params, const RetrievalIndex& index, const QueryContext& ctx,
                                   const AlphaTable& alpha);

/// s_i = f_dense(q_dense, H_i). Throws InputError on a dimension mismatch.
std::vector<double> score_chunks(const QueryContext& ctx, std::span<const DenseVector> entangled);

/// delta_i * f_dense(q_dense, c_i): post-retrieval multiplicative fusion.
std::vector<double> fusion_baseline_score(const QueryContext& ctx, const RetrievalIndex& index);

/// Node indices by score descending, ties by chunk id ascending.
std::vector<std::uint32_t> rank_nodes(std::span<const double> scores);

struct RetrievalResult {
    QueryContext context;
    std::vector<double> scores;
    std::vector<std::uint32_t> ranking;     ///< full ranking, all nodes
    std::vector<ContextSubgraph> subgraphs; ///< Top-N, rank order
};

/// LeSeGR retrieval over a fixed index and parameter set. Edge relevances are
/// computed once at construction.
class Retriever {
public:
    Retriever(const RetrievalIndex& index, const SparseEncoder& sparse, const EmbeddingProvider& dense,
              EncoderParams params);

    [[nodiscard]] QueryContext context(std::string_view query) const;
    [[nodiscard]] std::vector<double> score(const QueryContext& ctx) const;
    /// Throws InputError on an empty graph or N == 0.
    [[nodiscard]] RetrievalResult retrieve(std::string_view query, std::size_t top_n) const;

    [[nodiscard]] const EncoderParams& params() const noexcept { return params_; }
    [[nodiscard]] const RetrievalIndex& index() const noexcept { return index_; }
    [[nodiscard]] const AlphaTable& alpha() const noexcept { return alpha_; }

private:
    const RetrievalIndex& index_;
    const SparseEncoder& sparse_;
    const EmbeddingProvider& dense_;
    EncoderParams params_;
    AlphaTable alpha_;
};

/// One JSON line: {"query", "results":[{"chunk_id","score","neighbor_ids"}]}.
void write_retrieval_jsonl(std::ostream& out, const std::string& query, std::span<const ContextSubgraph> subgraphs);

}  // namespace cgrag
