#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cgrag::testing {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11U) * 0x1.0p-53; }

double bm25_oracle(const std::vector<std::vector<std::string>>& collection, std::size_t doc,
                   const std::vector<std::string>& query_terms, double k1, double b) {
    const double n_docs = static_cast<double>(collection.size());
    double total = 0.0;
    for (const auto& d : collection) total += static_cast<double>(d.size());
    const double avgdl = total / n_docs;
    const auto& d = collection[doc];
    const double dl = static_cast<double>(d.size());

    std::set<std::string> distinct(query_terms.begin(), query_terms.end());
    double score = 0.0;
    for (const auto& term : distinct) {
        double df = 0.0;
        for (const auto& other : collection) {
            if (std::find(other.begin(), other.end(), term) != other.end()) df += 1.0;
        }
        if (df == 0.0) continue;
        const double tf = static_cast<double>(std::count(d.begin(), d.end(), term));
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    return score;
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double mat_at(const Eigen::MatrixXd& m, std::size_t r, std::size_t c) {
    return m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

double act(Activation a, double x) { return a == Activation::Tanh ? std::tanh(x) : x; }

}  // namespace

double alpha_oracle(const EncoderParams& params, const std::vector<double>& xi, const std::vector<double>& xj) {
    const auto& h = params.alpha_head();
    const std::size_t d = xi.size();
    double logit = h.b2(0);
    for (std::size_t r = 0; r < d; ++r) {
        double pre = h.b1(static_cast<Eigen::Index>(r));
        for (std::size_t c = 0; c < d; ++c) pre += mat_at(h.w1, r, c) * (xi[c] - xj[c]);
        logit += h.w2(static_cast<Eigen::Index>(r)) * std::tanh(pre);
    }
    return 1.0 / (1.0 + std::exp(-logit));
}

Mat propagate_oracle(const EncoderParams& params, const MessageGraph& g, const std::set<std::uint32_t>& dropped) {
    const auto& cfg = params.config();
    const std::size_t n = g.size();
    Mat h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = to_std(g.x[i]);

    // Gate matrix: G[i][j] = delta_j * alpha_ij on edges, delta_i on the
    // diagonal; mask marks the aggregation set of row i.
    Mat gate(n, std::vector<double>(n, 0.0));
    std::vector<std::vector<bool>> mask(n, std::vector<bool>(n, false));
    std::vector<double> denom(n);
    for (std::size_t i = 0; i < n; ++i) {
        denom[i] = static_cast<double>(g.in[i].size() + 1);
        mask[i][i] = !dropped.contains(static_cast<std::uint32_t>(i));
        gate[i][i] = g.delta[i];
        for (auto j : g.in[i]) {
            mask[i][j] = !dropped.contains(j);
            gate[i][j] = g.delta[j] * alpha_oracle(params, h[i], h[j]);
        }
    }

    for (std::size_t k = 0; k < cfg.layers; ++k) {
        const auto& layer = params.layers()[k];
        const std::size_t in = cfg.in_dim(k);
        const std::size_t out = cfg.out_dim(k);
        Mat next(n, std::vector<double>(out, 0.0));
        if (cfg.variant == EncoderVariant::MeanLinear) {
            // Z = (G / denom) H ;  H' = act(Z W^T + b)
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> z(in, 0.0);
                for (std::size_t j = 0; j < n; ++j) {
                    if (!mask[i][j]) continue;
                    for (std::size_t c = 0; c < in; ++c) z[c] += gate[i][j] * h[j][c] / denom[i];
                }
                for (std::size_t r = 0; r < out; ++r) {
                    double pre = layer.bias(static_cast<Eigen::Index>(r));
                    for (std::size_t c = 0; c < in; ++c) pre += mat_at(layer.w, r, c) * z[c];
                    next[i][r] = act(cfg.activation(k), pre);
                }
            }
        } else {
            const std::size_t heads = cfg.heads;
            const std::size_t dh = out / heads;
            auto project = [&](const Eigen::MatrixXd& w) {
                Mat p(n, std::vector<double>(out, 0.0));
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t r = 0; r < out; ++r) {
                        for (std::size_t c = 0; c < in; ++c) p[i][r] += mat_at(w, r, c) * h[i][c];
                    }
                }
                return p;
            };
            const Mat q = project(layer.wq);
            const Mat kk = project(layer.wk);
            const Mat v = project(layer.wv);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t hd = 0; hd < heads; ++hd) {
                    std::vector<double> e(n, -INFINITY);
                    double mx = -INFINITY;
                    for (std::size_t j = 0; j < n; ++j) {
                        const bool member = j == i || std::find(g.in[i].begin(), g.in[i].end(), j) != g.in[i].end();
                        if (!member) continue;
                        double dot = 0.0;
                        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) dot += q[i][c] * kk[j][c];
                        e[j] = gate[i][j] * dot / std::sqrt(static_cast<double>(dh));
                        mx = std::max(mx, e[j]);
                    }
                    double z = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (e[j] != -INFINITY) z += std::exp(e[j] - mx);
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        if (e[j] == -INFINITY || !mask[i][j]) continue;
                        const double a = std::exp(e[j] - mx) / z;
                        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) next[i][c] += a * gate[i][j] * v[j][c];
                    }
                }
                for (std::size_t r = 0; r < out; ++r) {
                    next[i][r] = act(cfg.activation(k), next[i][r] + layer.bias(static_cast<Eigen::Index>(r)));
                }
            }
        }
        h = std::move(next);
    }
    return h;
}

std::set<std::tuple<std::string, std::string, int>> brute_force_edges(const Corpus& corpus, const ChunkStore& store,
                                                                      std::size_t n) {
    std::set<std::tuple<std::string, std::string, int>> edges;
    const std::size_t m = store.size();
    auto relevance = [&](std::size_t a, std::size_t b) {
        // Summed separately, then added: exact ties between candidates stay exact.
        double sparse = 0.0;
        for (const auto& [t, w] : store.sparse[a].entries()) sparse += w * store.sparse[b].weight(t);
        double dense = 0.0;
        for (std::size_t c = 0; c < store.dense[a].dim(); ++c) dense += store.dense[a][c] * store.dense[b][c];
        return sparse + dense;
    };
    for (std::size_t i = 0; i < m; ++i) {
        const auto& ci = store.chunks[i].id;
        const Document* doc_i = corpus.find(ci.doc);
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            const auto& cj = store.chunks[j].id;
            if (ci.doc == cj.doc) {
                // c_j precedes c_i
                if (cj.ordinal + 1 == ci.ordinal) {
                    edges.emplace(cj.str(), ci.str(), static_cast<int>(EdgeKind::IntraAdjacency));
                }
                continue;
            }
            // inter: doc(i) cites doc(j); keep c_j if fewer than n chunks of
            // doc(j) beat it (ties resolved by ordinal).
            const bool cites = doc_i && std::find(doc_i->references.begin(), doc_i->references.end(), cj.doc) !=
                                            doc_i->references.end();
            if (!cites) continue;
            const double rij = relevance(i, j);
            std::size_t better = 0;
            for (std::size_t k = 0; k < m; ++k) {
                if (k == j || store.chunks[k].id.doc != cj.doc) continue;
                const double rik = relevance(i, k);
                if (rik > rij || (rik == rij && store.chunks[k].id.ordinal < cj.ordinal)) ++better;
            }
            if (better < n) edges.emplace(cj.str(), ci.str(), static_cast<int>(EdgeKind::InterDoc));
        }
    }
    return edges;
}

MessageGraph random_message_graph(std::mt19937_64& rng, std::size_t max_nodes, std::size_t dim) {
    const std::size_t n = 1 + rng() % max_nodes;
    MessageGraph g;
    g.in.resize(n);
    const double p = uniform01(rng) * 0.6;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && uniform01(rng) < p) g.in[i].push_back(static_cast<std::uint32_t>(j));
        }
        Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
        for (Eigen::Index c = 0; c < x.size(); ++c) x(c) = 2.0 * uniform01(rng) - 1.0;
        g.x.push_back(x);
        g.delta.push_back(uniform01(rng) < 0.25 ? 0.0 : 3.0 * uniform01(rng));
    }
    return g;
}

EncoderParams random_params(const EncoderConfig& cfg, std::mt19937_64& rng, double scale) {
    auto p = EncoderParams::zeros(cfg);
    for (auto& b : p.blocks()) {
        for (std::size_t i = 0; i < b.size; ++i) b.data[i] = scale * (2.0 * uniform01(rng) - 1.0);
    }
    return p;
}

std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t vocab) {
    std::string s;
    for (std::size_t w = 0; w < words; ++w) {
        if (w) s += ' ';
        s += "w" + std::to_string(rng() % vocab);
    }
    return s;
}

}  // namespace cgrag::testing

namespace cgrag::testing {

GradCheck gradient_check(const CandidateObjective& objective, const EncoderParams& params, const TrainExample& ex,
                         double step, double floor) {
    const auto analytic = objective.loss_and_grad(params, ex);
    const auto grad_blocks = analytic.grad.blocks();
    EncoderParams probe = params;
    auto blocks = probe.blocks();
    GradCheck out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b].size; ++i) {
            const double saved = blocks[b].data[i];
            blocks[b].data[i] = saved + step;
            const double up = objective.loss(probe, ex);
            blocks[b].data[i] = saved - step;
            const double down = objective.loss(probe, ex);
            blocks[b].data[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double a = grad_blocks[b].data[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst_param = blocks[b].name + "[" + std::to_string(i) + "]";
            }
            ++out.checked;
        }
    }
    return out;
}

}  // namespace cgrag::testing
