#include "cgrag/graph.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "cgrag/error.hpp"

namespace cgrag {

using ojson = nlohmann::ordered_json;

std::string_view to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::IntraAdjacency: return "intra-adjacency";
        case EdgeKind::IntraCrossref: return "intra-crossref";
        case EdgeKind::InterDoc: return "inter-doc";
    }
    return "unknown";
}

EdgeKind parse_edge_kind(std::string_view s) {
    if (s == "intra-adjacency") return EdgeKind::IntraAdjacency;
    if (s == "intra-crossref") return EdgeKind::IntraCrossref;
    if (s == "inter-doc") return EdgeKind::InterDoc;
    throw InputError("unknown edge kind: " + std::string(s));
}

std::optional<std::size_t> ChunkStore::find(const ChunkId& id) const {
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (chunks[i].id == id) return i;
    }
    return std::nullopt;
}

ChunkStore encode_chunks(std::vector<Chunk> chunks, const SparseEncoder& sparse,
                         const EmbeddingProvider& dense) {
    ChunkStore store;
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) {
        store.sparse.push_back(sparse.encode_chunk(c.tokens));
        texts.push_back(c.text);
    }
    store.dense = dense.embed_batch(texts);
    store.chunks = std::move(chunks);
    return store;
}

std::vector<EdgeSpec> build_intra_edges(std::span<const Chunk> doc_chunks,
                                        std::span<const ChunkCrossRef> crossrefs) {
    std::vector<EdgeSpec> edges;
    for (std::size_t i = 1; i < doc_chunks.size(); ++i) {
        edges.push_back({doc_chunks[i - 1].id, doc_chunks[i].id, EdgeKind::IntraAdjacency, 1.0});
    }
    if (crossrefs.empty()) return edges;

    const std::string& doc = doc_chunks.empty() ? crossrefs.front().from.doc : doc_chunks.front().id.doc;
    std::set<std::pair<ChunkId, ChunkId>> seen;
    for (const auto& x : crossrefs) {
        if (x.from.doc != doc || x.to.doc != doc) {
            throw InputError("cross-reference " + x.from.str() + " -> " + x.to.str() +
                             " spans documents; use inter-document edges instead");
        }
        const bool known_from = std::any_of(doc_chunks.begin(), doc_chunks.end(),
                                            [&](const Chunk& c) { return c.id == x.from; });
        const bool known_to = std::any_of(doc_chunks.begin(), doc_chunks.end(),
                                          [&](const Chunk& c) { return c.id == x.to; });
        if (!known_from || !known_to) {
            throw InputError("cross-reference " + x.from.str() + " -> " + x.to.str() + " names a missing chunk");
        }
        if (x.from == x.to || !seen.emplace(x.to, x.from).second) continue;
        edges.push_back({x.to, x.from, EdgeKind::IntraCrossref, 1.0});
    }
    return edges;
}

double chunk_relevance(const ChunkStore& store, std::size_t a, std::size_t b) {
    return f_sparse(store.sparse[a], store.sparse[b]) + f_dense(store.dense[a], store.dense[b]);
}

std::vector<EdgeSpec> build_inter_edges(const ChunkStore& store, std::span<const std::size_t> citing,
                                        std::span<const std::size_t> cited, std::size_t n) {
    if (n == 0) throw InputError("top-n must be >= 1");
    if (store.sparse.size() != store.chunks.size() || store.dense.size() != store.chunks.size()) {
        throw InputError("chunk store is missing representations");
    }
    for (auto idx : citing) {
        if (idx >= store.size()) throw InputError("missing representation for chunk index " + std::to_string(idx));
    }
    for (auto idx : cited) {
        if (idx >= store.size()) throw InputError("missing representation for chunk index " + std::to_string(idx));
    }
    std::vector<EdgeSpec> edges;
    std::vector<std::pair<double, std::size_t>> scored;
    for (auto i : citing) {
        scored.clear();
        for (auto j : cited) scored.emplace_back(chunk_relevance(store, i, j), j);
        const auto keep = std::min(n, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                          [&](const auto& x, const auto& y) {
                              if (x.first != y.first) return x.first > y.first;
                              return store.chunks[x.second].id < store.chunks[y.second].id;
                          });
        for (std::size_t k = 0; k < keep; ++k) {
            edges.push_back({store.chunks[scored[k].second].id, store.chunks[i].id, EdgeKind::InterDoc,
                             scored[k].first});
        }
    }
    return edges;
}

// -- ContextualGraph ---------------------------------------------------------

ContextualGraph::ContextualGraph(std::vector<ChunkId> nodes, std::vector<EdgeSpec> edges,
                                 GraphProvenance prov)
    : nodes_(std::move(nodes)), prov_(std::move(prov)) {
    std::sort(nodes_.begin(), nodes_.end());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!index_.emplace(nodes_[i].str(), static_cast<std::uint32_t>(i)).second) {
            throw InputError("duplicate node " + nodes_[i].str());
        }
    }
    edges_.reserve(edges.size());
    for (const auto& e : edges) {
        auto s = index_of(e.src);
        auto d = index_of(e.dst);
        if (!s || !d) throw InputError("edge " + e.src.str() + " -> " + e.dst.str() + " has an unknown endpoint");
        if (*s == *d) throw InputError("self edge on " + e.src.str());
        edges_.push_back({*s, *d, e.kind, e.weight});
    }
    std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.dst, a.src, a.kind) < std::tie(b.dst, b.src, b.kind);
    });
    for (std::size_t k = 1; k < edges_.size(); ++k) {
        const auto& a = edges_[k - 1];
        const auto& b = edges_[k];
        if (a.dst == b.dst && a.src == b.src && a.kind == b.kind) {
            throw InputError("duplicate edge " + nodes_[a.src].str() + " -> " + nodes_[a.dst].str() + " (" +
                             std::string(to_string(a.kind)) + ")");
        }
    }
    in_.assign(nodes_.size(), {});
    for (const auto& e : edges_) {
        auto& list = in_[e.dst];
        if (list.empty() || list.back() != e.src) list.push_back(e.src);
    }
}

std::optional<std::uint32_t> ContextualGraph::index_of(const ChunkId& id) const {
    auto it = index_.find(id.str());
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<EdgeSpec> ContextualGraph::edge_specs() const {
    std::vector<EdgeSpec> out;
    out.reserve(edges_.size());
    for (const auto& e : edges_) out.push_back({nodes_[e.src], nodes_[e.dst], e.kind, e.weight});
    return out;
}

ContextSubgraph ContextualGraph::induced_subgraph(const ChunkId& center) const {
    const auto c = index_of(center);
    if (!c) throw InputError("unknown chunk id " + center.str());
    std::vector<std::uint32_t> members{*c};
    for (auto j : in_[*c]) members.push_back(j);
    std::vector<bool> in_set(nodes_.size(), false);
    for (auto m : members) in_set[m] = true;

    ContextSubgraph sg;
    sg.center = center;
    for (auto m : members) sg.nodes.push_back(nodes_[m]);
    for (const auto& e : edges_) {
        if (in_set[e.src] && in_set[e.dst]) sg.edges.push_back({nodes_[e.src], nodes_[e.dst], e.kind, e.weight});
    }
    return sg;
}

namespace {

ojson provenance_json(const GraphProvenance& p) {
    ojson j;
    j["corpus_hash"] = p.corpus_hash;
    j["l"] = p.chunk_length;
    j["n"] = p.top_n;
    j["sparse_params"] = {{"k1", p.k1}, {"b", p.b}};
    j["dense_provider_id"] = p.dense_provider_id;
    return j;
}

std::string describe_mismatch(const GraphProvenance& have, const GraphProvenance& want) {
    std::vector<std::string> diffs;
    if (have.corpus_hash != want.corpus_hash) diffs.emplace_back("corpus content");
    if (have.chunk_length != want.chunk_length) diffs.emplace_back("chunk length");
    if (have.top_n != want.top_n) diffs.emplace_back("top-n");
    if (have.k1 != want.k1 || have.b != want.b) diffs.emplace_back("sparse parameters");
    if (have.dense_provider_id != want.dense_provider_id) diffs.emplace_back("dense provider");
    std::string out;
    for (const auto& d : diffs) out += (out.empty() ? "" : ", ") + d;
    return out;
}

}  // namespace

void ContextualGraph::save(const std::filesystem::path& path) const {
    ojson j;
    j["format_version"] = kFormatVersion;
    const auto prov = provenance_json(prov_);
    for (const auto& [k, v] : prov.items()) j[k] = v;
    ojson nodes = ojson::array();
    for (const auto& n : nodes_) nodes.push_back(n.str());
    j["nodes"] = std::move(nodes);
    ojson edges = ojson::array();
    for (const auto& e : edges_) edges.push_back({e.src, e.dst, to_string(e.kind), e.weight});
    j["edges"] = std::move(edges);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write graph cache: " + path.string());
    out << j.dump() << '\n';
}

ContextualGraph ContextualGraph::load(const std::filesystem::path& path,
                                      const std::optional<GraphProvenance>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("contextual graph cache not found: " + path.string());
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const ojson::exception& e) {
        throw InputError("corrupt graph cache " + path.string() + ": " + e.what());
    }
    const int version = j.is_object() ? j.value("format_version", -1) : -1;
    if (version != kFormatVersion) {
        throw VersionError("graph cache " + path.string() + " has format_version " + std::to_string(version) +
                           ", expected " + std::to_string(kFormatVersion));
    }
    try {
        GraphProvenance prov;
        prov.corpus_hash = j.at("corpus_hash").get<std::string>();
        prov.chunk_length = j.at("l").get<std::size_t>();
        prov.top_n = j.at("n").get<std::size_t>();
        prov.k1 = j.at("sparse_params").at("k1").get<double>();
        prov.b = j.at("sparse_params").at("b").get<double>();
        prov.dense_provider_id = j.at("dense_provider_id").get<std::string>();
        if (expected && !(*expected == prov)) {
            throw ProvenanceError("graph cache " + path.string() + " is stale (" +
                                  describe_mismatch(prov, *expected) + " changed); rebuild it");
        }
        std::vector<ChunkId> nodes;
        for (const auto& n : j.at("nodes")) nodes.push_back(ChunkId::parse(n.get<std::string>()));
        std::vector<EdgeSpec> edges;
        for (const auto& e : j.at("edges")) {
            const auto s = e.at(0).get<std::size_t>();
            const auto d = e.at(1).get<std::size_t>();
            if (s >= nodes.size() || d >= nodes.size()) throw InputError("edge endpoint out of range");
            edges.push_back({nodes[s], nodes[d], parse_edge_kind(e.at(2).get<std::string>()), e.at(3).get<double>()});
        }
        return ContextualGraph(std::move(nodes), std::move(edges), std::move(prov));
    } catch (const ojson::exception& e) {
        throw InputError("corrupt graph cache " + path.string() + ": " + e.what());
    }
}

void ContextualGraph::export_text(std::ostream& out) const {
    const auto old = out.precision(17);
    for (const auto& e : edges_) {
        out << nodes_[e.src].str() << ' ' << nodes_[e.dst].str() << ' ' << to_string(e.kind) << ' ' << e.weight
            << '\n';
    }
    out.precision(old);
}

std::vector<ChunkCrossRef> chunk_crossrefs(const Document& doc, std::size_t chunk_length) {
    std::vector<ChunkCrossRef> out;
    for (const auto& x : doc.crossrefs) {
        if (x.from_token >= doc.tokens.size() || x.to_token >= doc.tokens.size()) {
            throw InputError("cross-reference in \"" + doc.id + "\" points past the end of the text");
        }
        out.push_back({{doc.id, chunk_of_token(x.from_token, chunk_length)},
                       {doc.id, chunk_of_token(x.to_token, chunk_length)}});
    }
    return out;
}

ContextualGraph build_contextual_graph(const Corpus& corpus, const ChunkStore& store, std::size_t n,
                                       GraphProvenance prov) {
    if (n == 0) throw InputError("top-n must be >= 1");
    std::map<std::string, std::vector<std::size_t>, std::less<>> by_doc;
    for (std::size_t i = 0; i < store.size(); ++i) by_doc[store.chunks[i].id.doc].push_back(i);
    for (auto& [doc, idx] : by_doc) {
        std::sort(idx.begin(), idx.end(),
                  [&](auto a, auto b) { return store.chunks[a].id.ordinal < store.chunks[b].id.ordinal; });
    }

    std::vector<EdgeSpec> edges;
    for (const auto& doc : corpus.documents()) {
        auto it = by_doc.find(doc.id);
        if (it == by_doc.end()) continue;
        std::vector<Chunk> doc_chunks;
        for (auto i : it->second) doc_chunks.push_back(store.chunks[i]);
        const auto xrefs = chunk_crossrefs(doc, prov.chunk_length);
        auto intra = build_intra_edges(doc_chunks, xrefs);
        std::move(intra.begin(), intra.end(), std::back_inserter(edges));
    }
    for (const auto& [cited, citing] : corpus.citations()) {
        auto u = by_doc.find(citing);
        auto v = by_doc.find(cited);
        if (u == by_doc.end() || v == by_doc.end()) continue;
        auto inter = build_inter_edges(store, u->second, v->second, n);
        std::move(inter.begin(), inter.end(), std::back_inserter(edges));
    }

    std::vector<ChunkId> nodes;
    nodes.reserve(store.size());
    for (const auto& c : store.chunks) nodes.push_back(c.id);
    prov.top_n = n;
    return ContextualGraph(std::move(nodes), std::move(edges), std::move(prov));
}

}  // namespace cgrag
