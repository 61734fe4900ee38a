#include "cgrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "cgrag/error.hpp"

namespace cgrag {

RetrievalIndex::RetrievalIndex(ContextualGraph graph, const ChunkStore& store) : graph_(std::move(graph)) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < store.size(); ++i) pos.emplace(store.chunks[i].id.str(), i);
    if (store.sparse.size() != store.size() || store.dense.size() != store.size()) {
        throw InputError("chunk store is missing representations");
    }
    for (const auto& id : graph_.nodes()) {
        auto it = pos.find(id.str());
        if (it == pos.end()) throw InputError("no representation for graph node " + id.str());
        store_.chunks.push_back(store.chunks[it->second]);
        store_.sparse.push_back(store.sparse[it->second]);
        store_.dense.push_back(store.dense[it->second]);
        const auto& v = store.dense[it->second];
        x_.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.dim())));
    }
}

MessageGraph RetrievalIndex::message_graph(std::vector<double> delta) const {
    MessageGraph g;
    g.in.reserve(size());
    for (std::uint32_t i = 0; i < size(); ++i) {
        const auto nb = graph_.in_neighbors(i);
        g.in.emplace_back(nb.begin(), nb.end());
    }
    g.x = x_;
    g.delta = std::move(delta);
    return g;
}

std::vector<double> compute_delta(const SparseVector& q_sparse, const RetrievalIndex& index, PositivityMap pos_map) {
    std::vector<double> delta(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        delta[i] = apply_pos_map(pos_map, f_sparse(q_sparse, index.store().sparse[i]));
    }
    return delta;
}

QueryContext make_query_context(std::string_view query, const SparseEncoder& sparse, const EmbeddingProvider& dense,
                                const RetrievalIndex& index, PositivityMap pos_map) {
    QueryContext ctx;
    ctx.query = std::string(query);
    ctx.q_sparse = sparse.encode_query(query);
    ctx.q_dense = dense.embed(ctx.query);
    ctx.delta = compute_delta(ctx.q_sparse, index, pos_map);
    return ctx;
}

AlphaTable compute_alpha(const EncoderParams& params, const RetrievalIndex& index) {
    MessageGraph g = index.message_graph(std::vector<double>(index.size(), 0.0));
    return compute_alpha_table(params.alpha_head(), g);
}

std::vector<DenseVector> propagate(const EncoderParams& params, const RetrievalIndex& index, const QueryContext& ctx,
                                   const AlphaTable& alpha) {
    const auto g = index.message_graph(ctx.delta);
    const auto tape = encoder_forward(params, g, alpha, /*keep_tape=*/false);
    std::vector<DenseVector> out;
    out.reserve(index.size());
    for (const auto& h : tape.output()) out.emplace_back(std::vector<double>(h.data(), h.data() + h.size()));
    return out;
}

std::vector<double> score_chunks(const QueryContext& ctx, std::span<const DenseVector> entangled) {
    std::vector<double> s;
    s.reserve(entangled.size());
    for (const auto& h : entangled) s.push_back(f_dense(ctx.q_dense, h));
    return s;
}

std::vector<double> fusion_baseline_score(const QueryContext& ctx, const RetrievalIndex& index) {
    // Evaluated as f_dense(q, delta_i * c_i), the same operation order as the
    // identity encoder, so exact score ties survive rounding identically.
    std::vector<double> s(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        DenseVector gated = index.store().dense[i];
        for (auto& v : gated.values()) v *= ctx.delta[i];
        s[i] = f_dense(ctx.q_dense, gated);
    }
    return s;
}

std::vector<std::uint32_t> rank_nodes(std::span<const double> scores) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw NumericError("NaN score for node " + std::to_string(i));
    }
    std::vector<std::uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return order;
}

Retriever::Retriever(const RetrievalIndex& index, const SparseEncoder& sparse, const EmbeddingProvider& dense,
                     EncoderParams params)
    : index_(index), sparse_(sparse), dense_(dense), params_(std::move(params)) {
    if (params_.config().embed_dim != dense_.dimension()) {
        throw InputError("encoder embed_dim " + std::to_string(params_.config().embed_dim) +
                         " does not match embedding dimension " + std::to_string(dense_.dimension()));
    }
    alpha_ = compute_alpha(params_, index_);
}

QueryContext Retriever::context(std::string_view query) const {
    return make_query_context(query, sparse_, dense_, index_, params_.config().pos_map);
}

std::vector<double> Retriever::score(const QueryContext& ctx) const {
    const auto h = propagate(params_, index_, ctx, alpha_);
    return score_chunks(ctx, h);
}

RetrievalResult Retriever::retrieve(std::string_view query, std::size_t top_n) const {
    if (index_.size() == 0) throw InputError("cannot retrieve from an empty graph");
    if (top_n == 0) throw InputError("N must be >= 1");
    RetrievalResult r;
    r.context = context(query);
    r.scores = score(r.context);
    r.ranking = rank_nodes(r.scores);
    const auto keep = std::min(top_n, r.ranking.size());
    for (std::size_t k = 0; k < keep; ++k) {
        const auto node = r.ranking[k];
        auto sg = index_.graph().induced_subgraph(index_.graph().nodes()[node]);
        sg.score = r.scores[node];
        r.subgraphs.push_back(std::move(sg));
    }
    return r;
}

void write_retrieval_jsonl(std::ostream& out, const std::string& query, std::span<const ContextSubgraph> subgraphs) {
    nlohmann::ordered_json results = nlohmann::ordered_json::array();
    for (const auto& sg : subgraphs) {
        std::vector<std::string> nbrs;
        for (std::size_t i = 1; i < sg.nodes.size(); ++i) nbrs.push_back(sg.nodes[i].str());
        results.push_back({{"chunk_id", sg.center.str()}, {"score", sg.score}, {"neighbor_ids", nbrs}});
    }
    nlohmann::ordered_json line;
    line["query"] = query;
    line["results"] = std::move(results);
    out << line.dump() << '\n';
}

}  // namespace cgrag
