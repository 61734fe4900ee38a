#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cgrag/error.hpp"
#include "cgrag/retrieval.hpp"
#include "oracles.hpp"
#include "world.hpp"

using namespace cgrag;
using cgrag::testing::make_world;
using cgrag::testing::World;
using cgrag::testing::WorldOptions;

namespace {

WorldOptions opts(std::size_t chunk_length, std::size_t dim = 32) {
    WorldOptions o;
    o.chunk_length = chunk_length;
    o.dim = dim;
    return o;
}

std::vector<std::size_t> permutation_by(const std::vector<double>& scores) {
    std::vector<std::size_t> p(scores.size());
    std::iota(p.begin(), p.end(), 0);
    std::stable_sort(p.begin(), p.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    return p;
}

// One single-chunk document per entry and no citations: the graph has no edges.
World edgeless_world(std::mt19937_64& rng, std::size_t docs, std::size_t vocab, std::size_t dim) {
    std::vector<Document> ds;
    for (std::size_t d = 0; d < docs; ++d) {
        ds.push_back(make_document("D" + std::to_string(d), "", cgrag::testing::random_text(rng, 1 + rng() % 6, vocab)));
    }
    return make_world(std::move(ds), opts(8, dim));
}

}  // namespace

TEST(ComputeDelta, DisjointChunkUnderEachMap) {
    const auto w = make_world({make_document("A", "", "cell death"), make_document("B", "", "galaxy survey")},
                              opts(4));
    const auto q = w.sparse.encode_query("cell");
    const auto soft = compute_delta(q, *w.index, PositivityMap::Softplus);
    const auto floor = compute_delta(q, *w.index, PositivityMap::Floor);
    EXPECT_NEAR(soft[w.node("B#0")], std::log(2.0), 1e-15);
    EXPECT_EQ(floor[w.node("B#0")], 0.0);
    EXPECT_GT(floor[w.node("A#0")], 0.0);
    for (double d : soft) EXPECT_GT(d, 0.0);
}

TEST(ComputeDelta, AllUnknownQueryGivesMapOfZero) {
    const auto w = make_world({make_document("A", "", "a b"), make_document("B", "", "c d")}, opts(4));
    const auto q = w.sparse.encode_query("zzz qqq");
    for (double d : compute_delta(q, *w.index, PositivityMap::Softplus)) EXPECT_NEAR(d, std::log(2.0), 1e-15);
    for (double d : compute_delta(q, *w.index, PositivityMap::Floor)) EXPECT_EQ(d, 0.0);
}

TEST(ComputeDelta, OrderingMatchesRawBm25) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto w = edgeless_world(rng, 10, 8, 16);
        const auto qtext = cgrag::testing::random_text(rng, 3, 8);
        const auto q = w.sparse.encode_query(qtext);
        std::vector<double> raw(w.index->size());
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = f_sparse(q, w.index->store().sparse[i]);
        for (auto m : {PositivityMap::Floor, PositivityMap::Softplus}) {
            EXPECT_EQ(permutation_by(compute_delta(q, *w.index, m)), permutation_by(raw));
        }
    }
}

TEST(ScoreChunks, SelfAndZero) {
    QueryContext ctx;
    ctx.q_dense = DenseVector{1.0, -2.0, 0.5};
    const std::vector<DenseVector> h{ctx.q_dense, DenseVector(3)};
    const auto s = score_chunks(ctx, h);
    EXPECT_DOUBLE_EQ(s[0], 1.0 + 4.0 + 0.25);
    EXPECT_EQ(s[1], 0.0);
    const std::vector<DenseVector> bad{DenseVector(2)};
    EXPECT_THROW((void)score_chunks(ctx, bad), InputError);
}

TEST(RankNodes, TiesGoToLowerIndex) {
    const std::vector<double> s{0.5, 1.0, 0.5, 1.0, -1.0};
    EXPECT_EQ(rank_nodes(s), (std::vector<std::uint32_t>{1, 3, 0, 2, 4}));
}

TEST(FusionBaseline, DegenerateCases) {
    std::mt19937_64 rng(2);
    const auto w = edgeless_world(rng, 8, 10, 32);
    auto ctx = make_query_context("w1 w2", w.sparse, *w.dense, *w.index, PositivityMap::Floor);
    ctx.delta.assign(w.index->size(), 1.0);
    std::vector<double> dense(w.index->size());
    for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = f_dense(ctx.q_dense, w.index->store().dense[i]);
    EXPECT_EQ(rank_nodes(fusion_baseline_score(ctx, *w.index)), rank_nodes(dense));

}

TEST(FusionBaseline, EqualDenseScoresRankByDelta) {
    std::vector<Document> docs;
    for (const char* id : {"A", "B", "C", "D", "E"}) docs.push_back(make_document(id, "", "same words here"));
    const auto w = make_world(std::move(docs), opts(8));
    auto ctx = make_query_context("same words here", w.sparse, *w.dense, *w.index, PositivityMap::Floor);
    ctx.delta = {3.0, 1.0, 4.0, 1.5, 5.0};
    EXPECT_GT(f_dense(ctx.q_dense, w.index->store().dense[0]), 0.0);
    EXPECT_EQ(rank_nodes(fusion_baseline_score(ctx, *w.index)), rank_nodes(ctx.delta));
}

TEST(Equivalence, EdgelessIdentityEncoderRanksLikeFusion) {
    std::mt19937_64 rng(31);
    int compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t dim = (trial % 2) ? 32 : 64;
        const auto w = edgeless_world(rng, 4 + rng() % 12, 6 + rng() % 10, dim);
        ASSERT_TRUE(w.graph().edges().empty());
        for (auto m : {PositivityMap::Floor, PositivityMap::Softplus}) {
            const Retriever r(*w.index, w.sparse, *w.dense, EncoderParams::identity(dim, m));
            for (int qi = 0; qi < 4; ++qi) {
                const auto qtext = cgrag::testing::random_text(rng, 1 + rng() % 3, 12);
                const auto res = r.retrieve(qtext, w.index->size());
                const auto base = rank_nodes(fusion_baseline_score(res.context, *w.index));
                ASSERT_EQ(res.ranking, base) << "trial " << trial << " query '" << qtext << "'";
                ++compared;
            }
        }
    }
    RecordProperty("rankings_compared", compared);
}

TEST(Equivalence, IsolatedIdentityStateIsGatedInput) {
    const auto w = make_world({make_document("A", "", "alpha beta"), make_document("B", "", "beta gamma")}, opts(4));
    const auto params = EncoderParams::identity(32);
    const Retriever r(*w.index, w.sparse, *w.dense, params);
    const auto ctx = r.context("beta");
    const auto h = propagate(params, *w.index, ctx, r.alpha());
    for (std::size_t i = 0; i < h.size(); ++i) {
        for (std::size_t c = 0; c < 32; ++c) {
            EXPECT_NEAR(h[i][c], ctx.delta[i] * w.index->store().dense[i][c], 1e-12);
        }
    }
}

TEST(Retrieve, PlantedGraphArgmaxMatchesOracle) {
    // Six chunks over three documents; C cites A and B.
    const auto w = make_world({make_document("A", "", "kinase pathway signal kinase"),
                               make_document("B", "", "galaxy survey redshift"),
                               make_document("C", "", "pathway model kinase result", {"A", "B"})},
                              opts(2, 32));
    ASSERT_EQ(w.index->size(), 6u);
    std::mt19937_64 rng(40);
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.embed_dim = 32;
    cfg.hidden_dim = 8;
    for (auto variant : {EncoderVariant::MeanLinear, EncoderVariant::Attention}) {
        cfg.variant = variant;
        const auto params = cgrag::testing::random_params(cfg, rng);
        const Retriever r(*w.index, w.sparse, *w.dense, params);
        const auto res = r.retrieve("kinase pathway", 3);
        const auto h = cgrag::testing::propagate_oracle(params, w.index->message_graph(res.context.delta));
        std::vector<double> s(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) {
            s[i] = 0.0;
            for (std::size_t c = 0; c < 32; ++c) s[i] += res.context.q_dense[c] * h[i][c];
            EXPECT_NEAR(res.scores[i], s[i], 1e-9);
        }
        const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
        EXPECT_EQ(res.subgraphs.front().center, w.graph().nodes()[best]);
        ASSERT_EQ(res.subgraphs.size(), 3u);
        for (const auto& sg : res.subgraphs) {
            const auto expect = w.graph().induced_subgraph(sg.center);
            EXPECT_EQ(sg.nodes, expect.nodes);
            EXPECT_EQ(sg.score, res.scores[*w.graph().index_of(sg.center)]);
        }
    }
}

TEST(Retrieve, LargeNReturnsAllSortedAndTiesByChunkId) {
    // Identical single-chunk documents score identically.
    const auto w = make_world({make_document("B", "", "same words here"), make_document("A", "", "same words here"),
                               make_document("C", "", "same words here")},
                              opts(8));
    const Retriever r(*w.index, w.sparse, *w.dense, EncoderParams::identity(32));
    const auto res = r.retrieve("same words", 10);
    ASSERT_EQ(res.subgraphs.size(), 3u);
    EXPECT_EQ(res.subgraphs[0].center.doc, "A");
    EXPECT_EQ(res.subgraphs[1].center.doc, "B");
    EXPECT_EQ(res.subgraphs[2].center.doc, "C");
    EXPECT_THROW((void)r.retrieve("same", 0), InputError);
}

TEST(Retrieve, DeterministicAcrossRuns) {
    std::mt19937_64 rng(77);
    const auto docs = cgrag::testing::random_corpus(rng, 6, 4, 20, 15, 0.4);
    EncoderConfig cfg;
    cfg.embed_dim = 32;
    cfg.hidden_dim = 16;
    cfg.seed = 5;
    const auto params = EncoderParams::init(cfg);
    const auto w1 = make_world(docs, opts(4));
    const auto w2 = make_world(docs, opts(4));
    const Retriever r1(*w1.index, w1.sparse, *w1.dense, params);
    const Retriever r2(*w2.index, w2.sparse, *w2.dense, params);
    const auto a = r1.retrieve("w1 w3 w5", 4);
    const auto b = r2.retrieve("w1 w3 w5", 4);
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.ranking, b.ranking);
}

TEST(Retrieve, EmptyGraphIsRejected) {
    ContextualGraph g;
    ChunkStore store;
    const RetrievalIndex index(std::move(g), store);
    const SparseIndex sparse = SparseIndex::fit_tokens(std::vector<std::vector<std::string>>{{"x"}});
    const HashingEmbedder dense(32, 1);
    const Retriever r(index, sparse, dense, EncoderParams::identity(32));
    EXPECT_THROW((void)r.retrieve("x", 3), InputError);
}

TEST(Retrieve, JsonlExport) {
    const auto w = make_world({make_document("A", "", "a b c d e f"), make_document("B", "", "a b", {"A"})}, opts(3));
    const Retriever r(*w.index, w.sparse, *w.dense, EncoderParams::identity(32));
    const auto res = r.retrieve("a", 2);
    std::ostringstream os;
    write_retrieval_jsonl(os, "a", res.subgraphs);
    const auto j = nlohmann::json::parse(os.str());
    EXPECT_EQ(j.at("query"), "a");
    ASSERT_EQ(j.at("results").size(), 2u);
    EXPECT_EQ(j["results"][0]["chunk_id"], res.subgraphs[0].center.str());
    EXPECT_EQ(j["results"][0]["neighbor_ids"].size(), res.subgraphs[0].nodes.size() - 1);
}
