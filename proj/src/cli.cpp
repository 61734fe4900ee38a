#include "cgrag/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "cgrag/config.hpp"
#include "cgrag/corpus.hpp"
#include "cgrag/dense.hpp"
#include "cgrag/error.hpp"
#include "cgrag/eval.hpp"
#include "cgrag/graph.hpp"
#include "cgrag/hash.hpp"
#include "cgrag/rag.hpp"
#include "cgrag/retrieval.hpp"
#include "cgrag/sparse.hpp"
#include "cgrag/trainer.hpp"

namespace cgrag {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr int kArtifactVersion = 1;

struct Paths {
    fs::path dir;
    [[nodiscard]] fs::path ingest() const { return dir / "ingest.json"; }
    [[nodiscard]] fs::path chunks() const { return dir / "chunks.jsonl"; }
    [[nodiscard]] fs::path sparse() const { return dir / "sparse.json"; }
    [[nodiscard]] fs::path dense() const { return dir / "dense.json"; }
    [[nodiscard]] fs::path graph() const { return dir / "graph.json"; }
    [[nodiscard]] fs::path graph_manifest() const { return dir / "build_graph.json"; }
    [[nodiscard]] fs::path embed_cache() const { return dir / "embeddings-cache.json"; }
    [[nodiscard]] fs::path checkpoint() const { return dir / "encoder.ckpt"; }
    [[nodiscard]] fs::path train_manifest() const { return dir / "train.json"; }
    [[nodiscard]] fs::path train_history() const { return dir / "train_history.csv"; }
    [[nodiscard]] fs::path retrieval() const { return dir / "retrieval.jsonl"; }
    [[nodiscard]] fs::path answer() const { return dir / "answer.json"; }
    [[nodiscard]] fs::path report_json() const { return dir / "eval_report.json"; }
    [[nodiscard]] fs::path report_csv() const { return dir / "eval_report.csv"; }
};

void write_atomic(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("cannot write " + tmp.string());
        out << bytes;
        if (!out) throw InputError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

ojson read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path.string());
    try {
        return ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("corrupt artifact " + path.string() + ": " + e.what());
    }
}

void check_version(const ojson& j, const fs::path& path) {
    if (j.value("format_version", 0) != kArtifactVersion) {
        throw VersionError("unsupported format_version in " + path.string());
    }
}

/// Advisory exclusive lock on the cache directory, released on destruction.
class CacheLock {
public:
    explicit CacheLock(const fs::path& dir) {
        fs::create_directories(dir);
        const auto path = dir / ".lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw InputError("cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw InputError("cache directory " + dir.string() + " is locked by another process");
        }
    }
    ~CacheLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    CacheLock(const CacheLock&) = delete;
    CacheLock& operator=(const CacheLock&) = delete;

private:
    int fd_ = -1;
};

// -- chunk store persistence ---------------------------------------------------

std::string chunks_jsonl(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) {
        ojson j;
        j["id"] = c.id.str();
        j["char_begin"] = c.char_begin;
        j["char_end"] = c.char_end;
        j["text"] = c.text;
        j["tokens"] = c.tokens;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<Chunk> load_chunks(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("chunk store not found: " + path.string() + " (run ingest)");
    std::vector<Chunk> chunks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Chunk c;
            c.id = ChunkId::parse(j.at("id").get<std::string>());
            c.char_begin = j.at("char_begin").get<std::size_t>();
            c.char_end = j.at("char_end").get<std::size_t>();
            c.text = j.at("text").get<std::string>();
            c.tokens = j.at("tokens").get<std::vector<std::string>>();
            chunks.push_back(std::move(c));
        } catch (const nlohmann::json::exception& e) {
            throw InputError("corrupt chunk record at " + path.string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    }
    return chunks;
}

std::string dense_json(const ChunkStore& store, const std::string& provider_id, std::size_t dim) {
    ojson j;
    j["format_version"] = kArtifactVersion;
    j["provider_id"] = provider_id;
    j["dim"] = dim;
    j["ids"] = ojson::array();
    j["vectors"] = ojson::array();
    for (std::size_t i = 0; i < store.size(); ++i) {
        j["ids"].push_back(store.chunks[i].id.str());
        const auto v = store.dense[i].values();
        j["vectors"].push_back(std::vector<double>(v.begin(), v.end()));
    }
    return j.dump() + "\n";
}

// -- shared setup --------------------------------------------------------------

struct Globals {
    std::string config_path = "cgrag.conf";
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    bool verbose = false;
};

struct Context {
    RunConfig cfg;
    Paths paths;
    std::ostream& out;
    std::ostream& err;
    bool verbose = false;

    void log(const std::string& msg) const {
        if (verbose) err << "[cgrag] " << msg << '\n';
    }
};

std::shared_ptr<const EmbeddingProvider> make_dense(const Context& ctx) {
    const auto& c = ctx.cfg;
    if (c.dense_provider == "hash") return std::make_shared<HashingEmbedder>(c.dense_dim, c.seed, c.dense_normalize);
    RemoteEmbedderConfig rc;
    rc.url = c.dense_url;
    rc.model = c.dense_model;
    rc.api_key = c.dense_api_key;
    rc.dimension = c.dense_dim;
    rc.normalize = c.dense_normalize;
    rc.batch_size = c.dense_batch_size;
    rc.max_in_flight = c.dense_max_in_flight;
    return std::make_shared<CachingEmbedder>(std::make_shared<RemoteEmbedder>(rc), ctx.paths.embed_cache());
}

std::unique_ptr<LMClient> make_client(const Context& ctx) {
    const auto& c = ctx.cfg;
    if (c.lm_provider == "mock") {
        if (!fs::exists(c.lm_script)) throw ConfigError({"lm.script: file not found: " + c.lm_script.string()});
        return std::make_unique<ScriptedMockClient>(ScriptedMockClient::load(c.lm_script));
    }
    if (c.lm_provider == "remote") {
        RemoteChatConfig rc;
        rc.url = c.lm_url;
        rc.model = c.lm_model;
        rc.api_key = c.lm_api_key;
        rc.max_in_flight = c.lm_max_in_flight;
        return std::make_unique<RemoteChatClient>(rc);
    }
    return nullptr;
}

std::string corpus_hash_from_ingest(const Paths& p) {
    if (!fs::exists(p.ingest())) throw InputError("ingest artifacts not found in " + p.dir.string() + " (run ingest)");
    const auto j = read_json(p.ingest());
    check_version(j, p.ingest());
    return j.at("corpus_hash").get<std::string>();
}

GraphProvenance expected_provenance(const Context& ctx, const std::string& corpus_hash, const std::string& dense_id) {
    const auto& c = ctx.cfg;
    return {corpus_hash, c.chunk_length, c.top_n_context, c.bm25_k1, c.bm25_b, dense_id};
}

struct Loaded {
    SparseIndex sparse;
    std::shared_ptr<const EmbeddingProvider> dense;
    std::unique_ptr<RetrievalIndex> index;
    EncoderParams params;
};

Loaded load_pipeline(const Context& ctx, bool baseline) {
    const auto& p = ctx.paths;
    if (!fs::exists(p.graph())) {
        throw InputError("contextual graph cache not found: " + p.graph().string() + " (run build-graph)");
    }
    Loaded l;
    l.dense = make_dense(ctx);
    auto graph = ContextualGraph::load(p.graph(), expected_provenance(ctx, corpus_hash_from_ingest(p), l.dense->id()));
    l.sparse = SparseIndex::load(p.sparse());

    ChunkStore store;
    store.chunks = load_chunks(p.chunks());
    const auto dj = read_json(p.dense());
    check_version(dj, p.dense());
    if (dj.at("provider_id").get<std::string>() != l.dense->id()) {
        throw ProvenanceError("chunk embeddings in " + p.dense().string() + " come from another provider (run build-graph)");
    }
    const auto& ids = dj.at("ids");
    const auto& vecs = dj.at("vectors");
    if (ids.size() != store.chunks.size()) throw ProvenanceError("chunk embeddings out of date (run build-graph)");
    for (std::size_t i = 0; i < store.chunks.size(); ++i) {
        if (ids[i].get<std::string>() != store.chunks[i].id.str()) {
            throw ProvenanceError("chunk embeddings out of date (run build-graph)");
        }
        store.sparse.push_back(l.sparse.encode_chunk(store.chunks[i].tokens));
        store.dense.emplace_back(vecs[i].get<std::vector<double>>());
    }
    l.index = std::make_unique<RetrievalIndex>(std::move(graph), store);

    if (baseline) {
        l.params = EncoderParams::identity(ctx.cfg.dense_dim, ctx.cfg.pos_map);
        ctx.log("using the untrained fusion-equivalent parameters");
        return l;
    }
    if (!fs::exists(p.checkpoint())) {
        throw InputError("encoder checkpoint not found: " + p.checkpoint().string() +
                         " (run train, or pass --baseline)");
    }
    const auto tj = read_json(p.train_manifest());
    if (tj.value("graph_sha256", std::string{}) != sha256_file(p.graph())) {
        throw ProvenanceError("encoder checkpoint was trained on a different graph (rerun train)");
    }
    l.params = EncoderParams::load(p.checkpoint());
    return l;
}

// -- commands ------------------------------------------------------------------

int cmd_ingest(const Context& ctx) {
    const auto& c = ctx.cfg;
    if (c.corpus.empty()) throw ConfigError({"corpus: not set"});
    if (!fs::exists(c.corpus)) throw ConfigError({"corpus: file not found: " + c.corpus.string()});
    auto corpus = load_corpus(c.corpus);
    const auto hash = corpus.content_hash();
    if (fs::exists(ctx.paths.ingest()) && fs::exists(ctx.paths.chunks())) {
        const auto j = read_json(ctx.paths.ingest());
        if (j.value("format_version", 0) == kArtifactVersion && j.value("corpus_hash", std::string{}) == hash &&
            j.value("chunk_length", std::size_t{0}) == c.chunk_length) {
            ctx.out << "ingest: up to date (corpus " << hash.substr(0, 12) << ")\n";
            return 0;
        }
    }
    for (const auto& w : corpus.warnings()) ctx.err << "warning: " << w << '\n';
    auto set = chunk_corpus(corpus, c.chunk_length);
    for (const auto& w : set.warnings) ctx.err << "warning: " << w << '\n';

    write_atomic(ctx.paths.chunks(), chunks_jsonl(set.chunks));
    ojson j;
    j["format_version"] = kArtifactVersion;
    j["corpus_path"] = c.corpus.string();
    j["corpus_hash"] = hash;
    j["chunk_length"] = c.chunk_length;
    j["documents"] = corpus.size();
    j["chunks"] = set.chunks.size();
    j["config"] = c.to_json();
    write_atomic(ctx.paths.ingest(), j.dump(2) + "\n");
    ctx.out << "ingest: " << corpus.size() << " documents, " << set.chunks.size() << " chunks (corpus "
            << hash.substr(0, 12) << ") -> " << ctx.paths.chunks().string() << '\n';
    return 0;
}

int cmd_build_graph(const Context& ctx) {
    const auto& c = ctx.cfg;
    const auto& p = ctx.paths;
    const auto ingested_hash = corpus_hash_from_ingest(p);
    if (c.corpus.empty() || !fs::exists(c.corpus)) {
        throw ConfigError({"corpus: file not found: " + c.corpus.string()});
    }
    auto corpus = load_corpus(c.corpus);
    if (corpus.content_hash() != ingested_hash) {
        throw ProvenanceError("corpus changed since ingest (rerun ingest)");
    }
    const auto dense = make_dense(ctx);
    const auto prov = expected_provenance(ctx, ingested_hash, dense->id());
    if (fs::exists(p.graph()) && fs::exists(p.sparse()) && fs::exists(p.dense())) {
        try {
            (void)ContextualGraph::load(p.graph(), prov);
            ctx.out << "build-graph: up to date\n";
            return 0;
        } catch (const Error& e) {
            ctx.log(std::string("rebuilding: ") + e.what());
        }
    }
    auto chunks = load_chunks(p.chunks());
    ctx.log("fitting sparse index over " + std::to_string(chunks.size()) + " chunks");
    auto sparse = SparseIndex::fit(chunks, {c.bm25_k1, c.bm25_b});
    ctx.log("embedding chunks with " + dense->id());
    auto store = encode_chunks(std::move(chunks), sparse, *dense);
    auto graph = build_contextual_graph(corpus, store, c.top_n_context, prov);

    sparse.save(p.sparse());
    write_atomic(p.dense(), dense_json(store, dense->id(), dense->dimension()));
    graph.save(p.graph());
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& e : graph.edges()) ++counts[static_cast<int>(e.kind)];
    ojson j;
    j["format_version"] = kArtifactVersion;
    j["graph_sha256"] = sha256_file(p.graph());
    j["nodes"] = graph.node_count();
    j["edges"] = {{"intra-adjacency", counts[0]}, {"intra-crossref", counts[1]}, {"inter-doc", counts[2]}};
    j["config"] = c.to_json();
    write_atomic(p.graph_manifest(), j.dump(2) + "\n");
    ctx.out << "build-graph: " << graph.node_count() << " nodes, " << graph.edges().size() << " edges ("
            << counts[0] << " adjacency, " << counts[1] << " crossref, " << counts[2] << " inter-doc) -> "
            << p.graph().string() << '\n';
    return 0;
}

std::vector<LabeledQuery> select_training(const Context& ctx, const RetrievalIndex& index,
                                          std::vector<std::string>& qids) {
    const auto& c = ctx.cfg;
    if (c.train_dataset.empty()) throw ConfigError({"train.dataset: not set"});
    if (!fs::exists(c.train_dataset)) throw ConfigError({"train.dataset: file not found: " + c.train_dataset.string()});
    const auto items = load_qa_dataset(c.train_dataset);

    std::vector<const QAItem*> labeled;
    for (const auto& it : items) {
        if (!it.gold_chunks.empty()) labeled.push_back(&it);
    }
    if (labeled.empty()) throw InputError("train.dataset has no items with gold_chunks");
    // Seeded, order-independent subset: rank by a keyed hash of the qid.
    std::sort(labeled.begin(), labeled.end(), [&](const QAItem* a, const QAItem* b) {
        const auto ha = fnv1a64(a->qid, c.seed), hb = fnv1a64(b->qid, c.seed);
        return ha != hb ? ha < hb : a->qid < b->qid;
    });
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(c.label_fraction * static_cast<double>(labeled.size()))));
    labeled.resize(std::min(take, labeled.size()));
    std::sort(labeled.begin(), labeled.end(), [](const QAItem* a, const QAItem* b) { return a->qid < b->qid; });

    std::vector<LabeledQuery> out;
    for (const auto* it : labeled) {
        const auto node = index.graph().index_of(ChunkId::parse(it->gold_chunks.front()));
        if (!node) throw InputError("gold chunk " + it->gold_chunks.front() + " of " + it->qid + " is not in the graph");
        out.push_back({it->question, *node});
        qids.push_back(it->qid);
    }
    return out;
}

int cmd_train(const Context& ctx) {
    const auto& c = ctx.cfg;
    auto l = load_pipeline(ctx, true);
    std::vector<std::string> qids;
    const auto train_set = select_training(ctx, *l.index, qids);
    ctx.log("training on " + std::to_string(train_set.size()) + " labeled queries");
    auto result = train(c.initial_params(), *l.index, l.sparse, *l.dense, train_set, {}, c.training());

    result.best.save(ctx.paths.checkpoint());
    std::ostringstream csv;
    write_history_csv(csv, result.history);
    write_atomic(ctx.paths.train_history(), csv.str());
    ojson j;
    j["format_version"] = kArtifactVersion;
    j["graph_sha256"] = sha256_file(ctx.paths.graph());
    j["checkpoint_sha256"] = sha256_file(ctx.paths.checkpoint());
    j["best_epoch"] = result.best_epoch;
    j["train_qids"] = qids;
    j["history"] = ojson::array();
    for (const auto& r : result.history) {
        j["history"].push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"val_hit1", r.val_hit1}});
    }
    j["config"] = c.to_json();
    write_atomic(ctx.paths.train_manifest(), j.dump(2) + "\n");
    const double best_val = result.best_epoch ? result.history[result.best_epoch - 1].val_hit1 : 0.0;
    ctx.out << "train: " << train_set.size() << " labeled queries, " << result.history.size() << " epochs, best epoch "
            << result.best_epoch << " (train Hit@1 " << best_val << ") -> " << ctx.paths.checkpoint().string()
            << '\n';
    return 0;
}

int cmd_retrieve(const Context& ctx, const std::string& query, std::optional<std::size_t> n, bool baseline) {
    const auto l = load_pipeline(ctx, baseline);
    Retriever r(*l.index, l.sparse, *l.dense, l.params);
    const auto result = r.retrieve(query, n.value_or(ctx.cfg.top_n_results));

    std::ostringstream line;
    write_retrieval_jsonl(line, query, result.subgraphs);
    auto j = ojson::parse(line.str());
    j["config"] = ctx.cfg.to_json();
    write_atomic(ctx.paths.retrieval(), j.dump() + "\n");

    char score[32];
    for (std::size_t k = 0; k < result.subgraphs.size(); ++k) {
        std::snprintf(score, sizeof score, "%.9g", result.subgraphs[k].score);
        ctx.out << k + 1 << '\t' << result.subgraphs[k].center.str() << '\t' << score << '\n';
    }
    ctx.err << "retrieve: " << result.subgraphs.size() << " chunks -> " << ctx.paths.retrieval().string() << '\n';
    return 0;
}

int cmd_answer(const Context& ctx, const std::string& query, const std::string& kind_name,
               const std::vector<std::string>& options, std::optional<std::size_t> n, bool baseline) {
    const auto kind = parse_question_kind(kind_name);
    auto client = make_client(ctx);
    if (!client) throw ConfigError({"lm.provider: answer needs a language model (remote or mock)"});
    const auto l = load_pipeline(ctx, baseline);
    Retriever r(*l.index, l.sparse, *l.dense, l.params);
    RagConfig rag;
    rag.summary_words = ctx.cfg.summary_words;
    const auto rec = answer_pipeline(query, r, n.value_or(ctx.cfg.top_n_results), *client, kind, options, rag);
    rec.save(ctx.paths.answer(), ctx.cfg.to_json());
    if (rec.answer.abstained) {
        ctx.out << "answer: (abstained)\n";
    } else {
        ctx.out << "answer: " << rec.answer.label.value_or(rec.answer.text) << '\n';
    }
    ctx.err << "answer: " << rec.summaries.size() << " summaries, " << rec.transcript.size() << " model calls -> "
            << ctx.paths.answer().string() << '\n';
    return 0;
}

int cmd_eval(const Context& ctx, const std::string& dataset, const std::string& gold, std::optional<std::size_t> n,
             bool baseline) {
    const auto items = load_qa_dataset(dataset);
    auto client = make_client(ctx);
    const auto l = load_pipeline(ctx, baseline);
    Retriever r(*l.index, l.sparse, *l.dense, l.params);
    EvalConfig ec;
    ec.top_n = n.value_or(ctx.cfg.top_n_results);
    ec.gold = gold == "chunks" ? GoldMatch::Chunks : gold == "documents" ? GoldMatch::Documents : GoldMatch::Auto;
    ec.rag.summary_words = ctx.cfg.summary_words;
    auto report = run_eval(items, r, client.get(), ec);
    report.fingerprint["config"] = ctx.cfg.to_json();
    report.save(ctx.paths.report_json(), ctx.paths.report_csv());

    const auto& a = report.aggregates;
    ctx.out << "eval: " << report.rows.size() << " items";
    if (a.hit1.count) {
        ctx.out << ", Hit@1 " << a.hit1.value << ", Hit@3 " << a.hit3.value << ", MRR " << a.mrr.value << " over "
                << a.hit1.count;
    } else {
        ctx.out << ", no retrieval gold";
    }
    if (!a.answers_present) ctx.out << " (retrieval only)";
    if (a.failures) ctx.out << ", " << a.failures << " failed";
    ctx.out << " -> " << ctx.paths.report_json().string() << '\n';
    return 0;
}

void print_plan(const Context& ctx, const std::string& command) {
    const auto& p = ctx.paths;
    std::vector<std::string> reads, writes;
    if (command == "ingest") {
        reads = {ctx.cfg.corpus.string()};
        writes = {p.chunks().string(), p.ingest().string()};
    } else if (command == "build-graph") {
        reads = {ctx.cfg.corpus.string(), p.ingest().string(), p.chunks().string()};
        writes = {p.sparse().string(), p.dense().string(), p.graph().string(), p.graph_manifest().string()};
    } else if (command == "train") {
        reads = {ctx.cfg.train_dataset.string(), p.graph().string(), p.chunks().string()};
        writes = {p.checkpoint().string(), p.train_manifest().string(), p.train_history().string()};
    } else {
        reads = {p.graph().string(), p.chunks().string(), p.sparse().string(), p.dense().string(),
                 p.checkpoint().string()};
        writes = {command == "retrieve" ? p.retrieval().string()
                  : command == "answer" ? p.answer().string()
                                        : p.report_json().string()};
    }
    ctx.out << "plan: " << command << '\n';
    for (const auto& r : reads) ctx.out << "  read  " << r << '\n';
    for (const auto& w : writes) ctx.out << "  write " << w << '\n';
    ctx.out << "config: " << ctx.cfg.to_json().dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contextual citation-graph retrieval and answering", "cgrag"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Configuration file (key = value)");
    app.add_option("--seed", g.seed, "Override the configured seed");
    app.add_flag("--dry-run", g.dry_run, "Print the resolved plan without side effects");
    app.add_flag("--verbose", g.verbose, "Progress messages on stderr");

    std::string query, kind = "generative", dataset, gold = "auto";
    std::vector<std::string> options;
    std::optional<std::size_t> n_results;
    bool baseline = false;

    auto* ingest = app.add_subcommand("ingest", "Load and chunk the corpus");
    auto* build = app.add_subcommand("build-graph", "Encode chunks and build the contextual graph");
    auto* train_cmd = app.add_subcommand("train", "Train the graph encoder on labeled queries");
    auto* retrieve = app.add_subcommand("retrieve", "Rank chunks for a query");
    retrieve->add_option("query", query, "Query text")->required();
    retrieve->add_option("--n-results", n_results, "Number of chunks to return")->check(CLI::PositiveNumber);
    retrieve->add_flag("--baseline", baseline, "Use untrained fusion-equivalent parameters");
    auto* answer = app.add_subcommand("answer", "Answer a question from retrieved context");
    answer->add_option("query", query, "Question text")->required();
    answer->add_option("--kind", kind, "true_false, multiple_choice or generative")
        ->check(CLI::IsMember({"true_false", "multiple_choice", "generative"}));
    answer->add_option("--option", options, "Answer option (repeat for multiple choice)");
    answer->add_option("--n-results", n_results, "Number of subgraphs to summarize")->check(CLI::PositiveNumber);
    answer->add_flag("--baseline", baseline, "Use untrained fusion-equivalent parameters");
    auto* eval = app.add_subcommand("eval", "Evaluate on a labeled QA dataset");
    eval->add_option("dataset", dataset, "QA dataset (JSON Lines)")->required()->check(CLI::ExistingFile);
    eval->add_option("--n-results", n_results, "Subgraphs per answered question")->check(CLI::PositiveNumber);
    eval->add_option("--gold", gold, "Gold matching: auto, chunks or documents")
        ->check(CLI::IsMember({"auto", "chunks", "documents"}));
    eval->add_flag("--baseline", baseline, "Use untrained fusion-equivalent parameters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        auto cfg = load_config(g.config_path);
        if (g.seed) cfg.seed = *g.seed;
        Context ctx{cfg, Paths{cfg.cache_dir}, out, err, g.verbose};
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (g.dry_run) {
            print_plan(ctx, name);
            return 0;
        }
        CacheLock lock(cfg.cache_dir);
        ctx.log("cache directory " + cfg.cache_dir.string());
        if (sub == ingest) return cmd_ingest(ctx);
        if (sub == build) return cmd_build_graph(ctx);
        if (sub == train_cmd) return cmd_train(ctx);
        if (sub == retrieve) return cmd_retrieve(ctx, query, n_results, baseline);
        if (sub == answer) return cmd_answer(ctx, query, kind, options, n_results, baseline);
        return cmd_eval(ctx, dataset, gold, n_results, baseline);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace cgrag
