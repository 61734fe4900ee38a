#include "cgrag/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "cgrag/error.hpp"

namespace cgrag {

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

}  // namespace

double softmax_cross_entropy(std::span<const double> scores, std::size_t gold) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - mx);
    return -(scores[gold] - mx) + std::log(sum);
}

// -- CandidateObjective -------------------------------------------------------

struct CandidateObjective::Local {
    MessageGraph graph;
    std::vector<std::uint32_t> global;     // local -> global node
    std::vector<std::size_t> candidates;   // local positions, gold first
    Eigen::VectorXd query;
    DenseVector query_dense;
};

CandidateObjective::CandidateObjective(const RetrievalIndex& index, const SparseEncoder& sparse,
                                       const EmbeddingProvider& dense)
    : index_(index), sparse_(sparse), dense_(dense) {}

CandidateObjective::Local CandidateObjective::localize(const EncoderParams& params, const TrainExample& ex) const {
    const auto n = static_cast<std::uint32_t>(index_.size());
    std::vector<std::uint32_t> cands{ex.gold};
    cands.insert(cands.end(), ex.negatives.begin(), ex.negatives.end());
    if (cands.size() < 2) throw InputError("degenerate candidate set: need gold plus at least one negative");
    std::set<std::uint32_t> distinct;
    for (auto c : cands) {
        if (c >= n) throw InputError("candidate node " + std::to_string(c) + " is not in the graph");
        if (!distinct.insert(c).second) {
            throw InputError(c == ex.gold ? "degenerate candidate set: gold appears among negatives"
                                          : "degenerate candidate set: duplicate negative");
        }
    }

    // K-hop receptive field along in-edges.
    const auto& graph = index_.graph();
    const std::size_t depth_limit = params.config().layers;
    std::vector<int> depth(n, -1);
    std::deque<std::uint32_t> queue;
    for (auto c : cands) {
        depth[c] = 0;
        queue.push_back(c);
    }
    while (!queue.empty()) {
        const auto u = queue.front();
        queue.pop_front();
        if (static_cast<std::size_t>(depth[u]) == depth_limit) continue;
        for (auto v : graph.in_neighbors(u)) {
            if (depth[v] < 0) {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }

    Local local;
    std::vector<std::int64_t> to_local(n, -1);
    for (std::uint32_t v = 0; v < n; ++v) {
        if (depth[v] >= 0) {
            to_local[v] = static_cast<std::int64_t>(local.global.size());
            local.global.push_back(v);
        }
    }
    const auto q_sparse = sparse_.encode_query(ex.query);
    local.query_dense = dense_.embed(ex.query);
    local.query = Eigen::Map<const Eigen::VectorXd>(local.query_dense.data(),
                                                    static_cast<Eigen::Index>(local.query_dense.dim()));
    const auto pos_map = params.config().pos_map;
    for (auto v : local.global) {
        std::vector<std::uint32_t> in;
        for (auto u : graph.in_neighbors(v)) {
            if (to_local[u] >= 0) in.push_back(static_cast<std::uint32_t>(to_local[u]));
        }
        local.graph.in.push_back(std::move(in));
        local.graph.x.push_back(index_.inputs()[v]);
        local.graph.delta.push_back(apply_pos_map(pos_map, f_sparse(q_sparse, index_.store().sparse[v])));
    }
    for (auto c : cands) local.candidates.push_back(static_cast<std::size_t>(to_local[c]));
    return local;
}

std::vector<double> CandidateObjective::candidate_scores(const EncoderParams& params, const TrainExample& ex) const {
    const auto local = localize(params, ex);
    const auto alpha = compute_alpha_table(params.alpha_head(), local.graph);
    const auto tape = encoder_forward(params, local.graph, alpha, false);
    std::vector<double> scores;
    for (auto c : local.candidates) {
        const auto& h = tape.output()[c];
        scores.push_back(dot_pairwise(local.query_dense.values(), std::span<const double>(h.data(), h.size())));
    }
    return scores;
}

double CandidateObjective::loss(const EncoderParams& params, const TrainExample& ex) const {
    const auto s = candidate_scores(params, ex);
    return softmax_cross_entropy(s, 0);
}

CandidateObjective::LossAndGrad CandidateObjective::loss_and_grad(const EncoderParams& params,
                                                                  const TrainExample& ex) const {
    const auto local = localize(params, ex);
    const auto alpha = compute_alpha_table(params.alpha_head(), local.graph);
    const auto tape = encoder_forward(params, local.graph, alpha, true);

    LossAndGrad out;
    for (auto c : local.candidates) {
        const auto& h = tape.output()[c];
        out.scores.push_back(dot_pairwise(local.query_dense.values(), std::span<const double>(h.data(), h.size())));
    }
    out.loss = softmax_cross_entropy(out.scores, 0);
    if (!std::isfinite(out.loss)) throw NumericError("non-finite loss for query \"" + ex.query + "\"");

    const double mx = *std::max_element(out.scores.begin(), out.scores.end());
    std::vector<double> p(out.scores.size());
    double z = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) z += (p[c] = std::exp(out.scores[c] - mx));
    std::vector<Eigen::VectorXd> d_out(local.graph.size());
    for (std::size_t c = 0; c < p.size(); ++c) {
        const double ds = p[c] / z - (c == 0 ? 1.0 : 0.0);
        d_out[local.candidates[c]] = ds * local.query;
    }

    out.grad = EncoderParams::zeros(params.config());
    const auto d_alpha = encoder_backward(params, local.graph, alpha, tape, d_out, out.grad);
    alpha_head_backward(params.alpha_head(), local.graph, d_alpha, out.grad.alpha_head());
    for (const auto& b : std::as_const(out.grad).blocks()) {
        for (std::size_t i = 0; i < b.size; ++i) {
            if (!std::isfinite(b.data[i])) throw NumericError("non-finite gradient in parameter " + b.name);
        }
    }
    return out;
}

// -- AdamW -------------------------------------------------------------------

OptimizerState OptimizerState::for_params(const EncoderParams& params, AdamWConfig cfg) {
    OptimizerState s;
    s.cfg = cfg;
    for (const auto& b : params.blocks()) {
        s.m.emplace_back(b.size, 0.0);
        s.v.emplace_back(b.size, 0.0);
    }
    return s;
}

void adamw_step(EncoderParams& params, OptimizerState& state, const EncoderParams& grad) {
    auto pb = params.blocks();
    const auto gb = grad.blocks();
    if (pb.size() != gb.size() || pb.size() != state.m.size()) throw InputError("optimizer/parameter shape mismatch");
    ++state.step;
    const auto& c = state.cfg;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - c.lr * c.weight_decay;
    for (std::size_t b = 0; b < pb.size(); ++b) {
        if (pb[b].size != gb[b].size || pb[b].size != state.m[b].size()) {
            throw InputError("optimizer/parameter shape mismatch in " + pb[b].name);
        }
        auto& m = state.m[b];
        auto& v = state.v[b];
        for (std::size_t i = 0; i < pb[b].size; ++i) {
            const double g = gb[b].data[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            pb[b].data[i] = pb[b].data[i] * decay - c.lr * (mhat / (std::sqrt(vhat) + c.eps));
        }
    }
}

// -- training loop -------------------------------------------------------------

std::vector<std::uint32_t> sample_negatives(std::size_t node_count, std::uint32_t gold, std::size_t count,
                                            std::uint64_t seed) {
    std::vector<std::uint32_t> pool;
    pool.reserve(node_count);
    for (std::uint32_t i = 0; i < node_count; ++i) {
        if (i != gold) pool.push_back(i);
    }
    if (count >= pool.size()) return pool;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + uniform_below(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

double hit_at_1(const Retriever& retriever, std::span<const LabeledQuery> queries) {
    if (queries.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& q : queries) {
        const auto ctx = retriever.context(q.query);
        const auto ranking = rank_nodes(retriever.score(ctx));
        if (!ranking.empty() && ranking.front() == q.gold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

TrainResult train(EncoderParams params, const RetrievalIndex& index, const SparseEncoder& sparse,
                  const EmbeddingProvider& dense, std::span<const LabeledQuery> train_set,
                  std::span<const LabeledQuery> validation, const TrainConfig& cfg) {
    if (train_set.empty()) throw InputError("no labeled examples to train on");
    if (index.size() < 2) throw InputError("training needs at least two graph nodes");
    const auto val = validation.empty() ? train_set : validation;

    CandidateObjective objective(index, sparse, dense);
    auto opt = OptimizerState::for_params(params, cfg.optimizer);

    TrainResult result;
    double best_val = hit_at_1(Retriever(index, sparse, dense, params), val);
    result.best = params;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix(cfg.seed, epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);

        double total = 0.0;
        for (auto idx : order) {
            const auto& lq = train_set[idx];
            TrainExample ex{lq.query, lq.gold,
                            sample_negatives(index.size(), lq.gold, cfg.negatives, mix(mix(cfg.seed, epoch), idx))};
            const auto lg = objective.loss_and_grad(params, ex);
            total += lg.loss;
            adamw_step(params, opt, lg.grad);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = total / static_cast<double>(order.size());
        rec.val_hit1 = hit_at_1(Retriever(index, sparse, dense, params), val);
        result.history.push_back(rec);
        if (rec.val_hit1 >= best_val) {
            best_val = rec.val_hit1;
            result.best = params;
            result.best_epoch = epoch;
        }
    }
    result.last = std::move(params);
    return result;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
    const auto old = out.precision(17);
    out << "epoch,mean_loss,val_hit1\n";
    for (const auto& r : history) out << r.epoch << ',' << r.mean_loss << ',' << r.val_hit1 << '\n';
    out.precision(old);
}

}  // namespace cgrag
