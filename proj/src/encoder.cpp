#include "cgrag/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <random>

#include "cgrag/error.hpp"

namespace cgrag {

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes little endian");

std::string_view to_string(EncoderVariant v) {
    return v == EncoderVariant::MeanLinear ? "mean-linear" : "attention";
}
std::string_view to_string(Activation a) { return a == Activation::Identity ? "identity" : "tanh"; }
std::string_view to_string(PositivityMap p) { return p == PositivityMap::Floor ? "floor" : "softplus"; }

EncoderVariant parse_variant(std::string_view s) {
    if (s == "mean-linear") return EncoderVariant::MeanLinear;
    if (s == "attention") return EncoderVariant::Attention;
    throw InputError("unknown encoder variant: " + std::string(s));
}
Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    throw InputError("unknown activation: " + std::string(s));
}
PositivityMap parse_pos_map(std::string_view s) {
    if (s == "floor") return PositivityMap::Floor;
    if (s == "softplus") return PositivityMap::Softplus;
    throw InputError("unknown positivity map: " + std::string(s));
}

double apply_pos_map(PositivityMap m, double x) {
    if (m == PositivityMap::Floor) return x > 0.0 ? x : 0.0;
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void EncoderConfig::validate() const {
    std::vector<std::string> bad;
    if (layers == 0) bad.emplace_back("layers (K) must be >= 1");
    if (embed_dim == 0) bad.emplace_back("embed_dim must be >= 1");
    if (layers > 1 && hidden_dim == 0) bad.emplace_back("hidden_dim must be >= 1");
    if (variant == EncoderVariant::Attention) {
        if (heads == 0) {
            bad.emplace_back("heads must be >= 1");
        } else {
            if (embed_dim % heads != 0) bad.emplace_back("embed_dim must be divisible by heads");
            if (layers > 1 && hidden_dim % heads != 0) bad.emplace_back("hidden_dim must be divisible by heads");
        }
    }
    if (!bad.empty()) throw ConfigError(std::move(bad));
}

namespace {

class Uniform {
public:
    explicit Uniform(std::uint64_t seed) : rng_(seed) {}
    double operator()(double limit) {
        const double u = static_cast<double>(rng_() >> 11U) * 0x1.0p-53;
        return (2.0 * u - 1.0) * limit;
    }

private:
    std::mt19937_64 rng_;
};

void glorot(Eigen::MatrixXd& m, Uniform& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng(limit);
    }
}

void glorot(Eigen::VectorXd& v, std::size_t fan_in, Uniform& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + 1));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng(limit);
}

double activate(Activation a, double x) { return a == Activation::Tanh ? std::tanh(x) : x; }

/// Derivative expressed through the activation output.
double activate_grad(Activation a, double y) { return a == Activation::Tanh ? 1.0 - y * y : 1.0; }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderParams p;
    p.cfg_ = cfg;
    for (std::size_t k = 0; k < cfg.layers; ++k) {
        const auto in = static_cast<Eigen::Index>(cfg.in_dim(k));
        const auto out = static_cast<Eigen::Index>(cfg.out_dim(k));
        EncoderLayer layer;
        if (cfg.variant == EncoderVariant::MeanLinear) {
            layer.w = Eigen::MatrixXd::Zero(out, in);
        } else {
            layer.wq = Eigen::MatrixXd::Zero(out, in);
            layer.wk = Eigen::MatrixXd::Zero(out, in);
            layer.wv = Eigen::MatrixXd::Zero(out, in);
        }
        layer.bias = Eigen::VectorXd::Zero(out);
        p.layers_.push_back(std::move(layer));
    }
    const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
    p.head_.w1 = Eigen::MatrixXd::Zero(d, d);
    p.head_.b1 = Eigen::VectorXd::Zero(d);
    p.head_.w2 = Eigen::VectorXd::Zero(d);
    p.head_.b2 = Eigen::VectorXd::Zero(1);
    return p;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg) {
    auto p = zeros(cfg);
    Uniform rng(cfg.seed);
    for (auto& layer : p.layers_) {
        for (auto* m : {&layer.w, &layer.wq, &layer.wk, &layer.wv}) {
            if (m->size() > 0) glorot(*m, rng);
        }
    }
    glorot(p.head_.w1, rng);
    glorot(p.head_.w2, cfg.embed_dim, rng);
    return p;
}

EncoderParams EncoderParams::identity(std::size_t embed_dim, PositivityMap pos_map) {
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::MeanLinear;
    cfg.layers = 1;
    cfg.embed_dim = embed_dim;
    cfg.hidden_dim = embed_dim;
    cfg.hidden_activation = Activation::Identity;
    cfg.output_activation = Activation::Identity;
    cfg.pos_map = pos_map;
    auto p = zeros(cfg);
    p.layers_[0].w.setIdentity();
    return p;
}

EncoderParams EncoderParams::fusion_start(std::size_t embed_dim, PositivityMap pos_map, std::uint64_t seed) {
    auto p = identity(embed_dim, pos_map);
    p.cfg_.seed = seed;
    p.head_ = init(p.cfg_).head_;
    return p;
}

std::vector<ParamBlock> EncoderParams::blocks() {
    std::vector<ParamBlock> out;
    auto add = [&](std::string name, auto& m) {
        if (m.size() > 0) out.push_back({std::move(name), m.data(), static_cast<std::size_t>(m.size())});
    };
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto prefix = "layer" + std::to_string(k) + ".";
        add(prefix + "w", layers_[k].w);
        add(prefix + "wq", layers_[k].wq);
        add(prefix + "wk", layers_[k].wk);
        add(prefix + "wv", layers_[k].wv);
        add(prefix + "bias", layers_[k].bias);
    }
    add("alpha.w1", head_.w1);
    add("alpha.b1", head_.b1);
    add("alpha.w2", head_.w2);
    add("alpha.b2", head_.b2);
    return out;
}

std::vector<ConstParamBlock> EncoderParams::blocks() const {
    std::vector<ConstParamBlock> out;
    for (auto& b : const_cast<EncoderParams*>(this)->blocks()) out.push_back({b.name, b.data, b.size});
    return out;
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += b.size;
    return n;
}

bool EncoderParams::all_finite() const {
    for (const auto& b : blocks()) {
        for (std::size_t i = 0; i < b.size; ++i) {
            if (!std::isfinite(b.data[i])) return false;
        }
    }
    return true;
}

bool EncoderParams::operator==(const EncoderParams& o) const {
    if (!(cfg_ == o.cfg_)) return false;
    const auto a = blocks();
    const auto b = o.blocks();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size != b[i].size || std::memcmp(a[i].data, b[i].data, a[i].size * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

namespace {
constexpr std::string_view kMagic = "CGRAG-ENCODER\n";
}

void EncoderParams::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json h;
    h["format_version"] = kFormatVersion;
    h["variant"] = to_string(cfg_.variant);
    h["K"] = cfg_.layers;
    h["dims"] = {{"embed", cfg_.embed_dim}, {"hidden", cfg_.hidden_dim}};
    h["heads"] = cfg_.heads;
    h["pos_map"] = to_string(cfg_.pos_map);
    h["seed"] = cfg_.seed;
    h["activations"] = {{"hidden", to_string(cfg_.hidden_activation)},
                        {"output", to_string(cfg_.output_activation)}};
    nlohmann::ordered_json layout = nlohmann::ordered_json::array();
    for (const auto& b : blocks()) layout.push_back({b.name, b.size});
    h["blocks"] = layout;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out << kMagic << h.dump() << '\n';
    for (const auto& b : blocks()) {
        out.write(reinterpret_cast<const char*>(b.data), static_cast<std::streamsize>(b.size * sizeof(double)));
    }
    if (!out) throw Error("short write on checkpoint: " + path.string());
}

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint not found: " + path.string());
    std::string magic(kMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kMagic) throw InputError("not an encoder checkpoint: " + path.string());
    std::string header;
    std::getline(in, header);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    const int version = h.value("format_version", -1);
    if (version != kFormatVersion) {
        throw VersionError("checkpoint " + path.string() + " has format_version " + std::to_string(version) +
                           ", expected " + std::to_string(kFormatVersion));
    }
    EncoderConfig cfg;
    try {
        cfg.variant = parse_variant(h.at("variant").get<std::string>());
        cfg.layers = h.at("K").get<std::size_t>();
        cfg.embed_dim = h.at("dims").at("embed").get<std::size_t>();
        cfg.hidden_dim = h.at("dims").at("hidden").get<std::size_t>();
        cfg.heads = h.at("heads").get<std::size_t>();
        cfg.pos_map = parse_pos_map(h.at("pos_map").get<std::string>());
        cfg.seed = h.at("seed").get<std::uint64_t>();
        cfg.hidden_activation = parse_activation(h.at("activations").at("hidden").get<std::string>());
        cfg.output_activation = parse_activation(h.at("activations").at("output").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw InputError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    auto p = zeros(cfg);
    auto blocks = p.blocks();
    const auto& layout = h.at("blocks");
    if (layout.size() != blocks.size()) throw InputError("checkpoint block layout mismatch in " + path.string());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (layout[i].at(0).get<std::string>() != blocks[i].name ||
            layout[i].at(1).get<std::size_t>() != blocks[i].size) {
            throw InputError("checkpoint block layout mismatch at " + blocks[i].name);
        }
        in.read(reinterpret_cast<char*>(blocks[i].data),
                static_cast<std::streamsize>(blocks[i].size * sizeof(double)));
        if (!in) throw InputError("truncated checkpoint: " + path.string());
    }
    return p;
}

// -- alpha head --------------------------------------------------------------

double alpha_head_forward(const AlphaHead& head, const Eigen::VectorXd& diff) {
    const Eigen::VectorXd t = (head.w1 * diff + head.b1).array().tanh().matrix();
    return sigmoid(head.w2.dot(t) + head.b2(0));
}

AlphaTable compute_alpha_table(const AlphaHead& head, const MessageGraph& g) {
    AlphaTable alpha(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        alpha[i].reserve(g.in[i].size());
        for (auto j : g.in[i]) alpha[i].push_back(alpha_head_forward(head, g.x[i] - g.x[j]));
    }
    return alpha;
}

void alpha_head_backward(const AlphaHead& head, const MessageGraph& g, const AlphaTable& d_alpha,
                         AlphaHead& grad) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t p = 0; p < g.in[i].size(); ++p) {
            const double da = d_alpha[i][p];
            if (da == 0.0) continue;
            const Eigen::VectorXd diff = g.x[i] - g.x[g.in[i][p]];
            const Eigen::VectorXd t = (head.w1 * diff + head.b1).array().tanh().matrix();
            const double a = sigmoid(head.w2.dot(t) + head.b2(0));
            const double dlogit = da * a * (1.0 - a);
            grad.w2 += dlogit * t;
            grad.b2(0) += dlogit;
            const Eigen::VectorXd dpre = (dlogit * head.w2).cwiseProduct((1.0 - t.array().square()).matrix());
            grad.w1 += dpre * diff.transpose();
            grad.b1 += dpre;
        }
    }
}

// -- message passing ---------------------------------------------------------

namespace {

void check_finite(const Eigen::VectorXd& v, std::size_t layer, std::size_t node) {
    if (!v.allFinite()) {
        throw NumericError("non-finite state at layer " + std::to_string(layer) + ", node " + std::to_string(node));
    }
}

double gate(const MessageGraph& g, const AlphaTable& alpha, std::size_t i, std::size_t p) {
    return g.delta[g.in[i][p]] * alpha[i][p];
}

}  // namespace

ForwardTape encoder_forward(const EncoderParams& params, const MessageGraph& g, const AlphaTable& alpha,
                            bool keep_tape) {
    const auto& cfg = params.config();
    const std::size_t n = g.size();
    if (g.x.size() != n || g.delta.size() != n || alpha.size() != n) {
        throw InputError("message graph arrays have inconsistent sizes");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(g.x[i].size()) != cfg.embed_dim) {
            throw InputError("node " + std::to_string(i) + " embedding has dimension " +
                             std::to_string(g.x[i].size()) + ", encoder expects " +
                             std::to_string(cfg.embed_dim));
        }
    }

    ForwardTape tape;
    tape.h.push_back(g.x);
    for (std::size_t k = 0; k < cfg.layers; ++k) {
        const auto& layer = params.layers()[k];
        const auto& h = tape.h.back();
        const Activation act = cfg.activation(k);
        std::vector<Eigen::VectorXd> next(n);

        if (cfg.variant == EncoderVariant::MeanLinear) {
            std::vector<Eigen::VectorXd> zs;
            if (keep_tape) zs.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                Eigen::VectorXd z = g.delta[i] * h[i];
                for (std::size_t p = 0; p < g.in[i].size(); ++p) z += gate(g, alpha, i, p) * h[g.in[i][p]];
                z /= static_cast<double>(g.in[i].size() + 1);
                Eigen::VectorXd pre = layer.w * z + layer.bias;
                next[i] = pre.unaryExpr([act](double v) { return activate(act, v); });
                check_finite(next[i], k + 1, i);
                if (keep_tape) zs[i] = std::move(z);
            }
            if (keep_tape) tape.z.push_back(std::move(zs));
        } else {
            const auto out = static_cast<Eigen::Index>(cfg.out_dim(k));
            const auto heads = static_cast<Eigen::Index>(cfg.heads);
            const Eigen::Index dh = out / heads;
            const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
            std::vector<Eigen::VectorXd> qs(n), ks(n), vs(n);
            for (std::size_t i = 0; i < n; ++i) {
                qs[i] = layer.wq * h[i];
                ks[i] = layer.wk * h[i];
                vs[i] = layer.wv * h[i];
            }
            std::vector<Eigen::MatrixXd> atts(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto deg = static_cast<Eigen::Index>(g.in[i].size() + 1);
                Eigen::MatrixXd att(heads, deg);
                Eigen::VectorXd o = Eigen::VectorXd::Zero(out);
                for (Eigen::Index hd = 0; hd < heads; ++hd) {
                    const auto qi = qs[i].segment(hd * dh, dh);
                    Eigen::VectorXd e(deg);
                    for (Eigen::Index p = 0; p < deg; ++p) {
                        const std::size_t j = p == 0 ? i : g.in[i][p - 1];
                        const double gp = p == 0 ? g.delta[i] : gate(g, alpha, i, static_cast<std::size_t>(p - 1));
                        e(p) = gp * qi.dot(ks[j].segment(hd * dh, dh)) * scale;
                    }
                    const double mx = e.maxCoeff();
                    Eigen::VectorXd a = (e.array() - mx).exp().matrix();
                    a /= a.sum();
                    att.row(hd) = a.transpose();
                    for (Eigen::Index p = 0; p < deg; ++p) {
                        const std::size_t j = p == 0 ? i : g.in[i][p - 1];
                        const double gp = p == 0 ? g.delta[i] : gate(g, alpha, i, static_cast<std::size_t>(p - 1));
                        o.segment(hd * dh, dh) += (a(p) * gp) * vs[j].segment(hd * dh, dh);
                    }
                }
                Eigen::VectorXd pre = o + layer.bias;
                next[i] = pre.unaryExpr([act](double v) { return activate(act, v); });
                check_finite(next[i], k + 1, i);
                atts[i] = std::move(att);
            }
            if (keep_tape) {
                tape.q.push_back(std::move(qs));
                tape.kh.push_back(std::move(ks));
                tape.vh.push_back(std::move(vs));
                tape.att.push_back(std::move(atts));
            }
        }
        tape.h.push_back(std::move(next));
    }
    return tape;
}

AlphaTable encoder_backward(const EncoderParams& params, const MessageGraph& g, const AlphaTable& alpha,
                            const ForwardTape& tape, std::span<const Eigen::VectorXd> d_out,
                            EncoderParams& grad) {
    const auto& cfg = params.config();
    const std::size_t n = g.size();
    if (tape.h.size() != cfg.layers + 1) throw InputError("forward tape does not match encoder depth");

    AlphaTable d_alpha(n);
    for (std::size_t i = 0; i < n; ++i) d_alpha[i].assign(g.in[i].size(), 0.0);

    std::vector<Eigen::VectorXd> dh(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto dim = static_cast<Eigen::Index>(cfg.embed_dim);
        dh[i] = (i < d_out.size() && d_out[i].size() == dim) ? d_out[i] : Eigen::VectorXd::Zero(dim);
    }

    for (std::size_t kk = cfg.layers; kk-- > 0;) {
        const auto& layer = params.layers()[kk];
        auto& glayer = grad.layers()[kk];
        const auto& h_in = tape.h[kk];
        const auto& h_out = tape.h[kk + 1];
        const Activation act = cfg.activation(kk);
        const auto in_dim = static_cast<Eigen::Index>(cfg.in_dim(kk));
        std::vector<Eigen::VectorXd> dprev(n, Eigen::VectorXd::Zero(in_dim));

        std::vector<Eigen::VectorXd> dpre(n);
        for (std::size_t i = 0; i < n; ++i) {
            dpre[i] = dh[i].cwiseProduct(h_out[i].unaryExpr([act](double y) { return activate_grad(act, y); }));
            glayer.bias += dpre[i];
        }

        if (cfg.variant == EncoderVariant::MeanLinear) {
            const auto& zs = tape.z.at(kk);
            for (std::size_t i = 0; i < n; ++i) {
                if (dpre[i].isZero(0.0)) continue;
                glayer.w += dpre[i] * zs[i].transpose();
                const Eigen::VectorXd dz = layer.w.transpose() * dpre[i];
                const double inv = 1.0 / static_cast<double>(g.in[i].size() + 1);
                dprev[i] += (g.delta[i] * inv) * dz;
                for (std::size_t p = 0; p < g.in[i].size(); ++p) {
                    const auto j = g.in[i][p];
                    dprev[j] += (gate(g, alpha, i, p) * inv) * dz;
                    d_alpha[i][p] += g.delta[j] * inv * dz.dot(h_in[j]);
                }
            }
        } else {
            const auto& qs = tape.q.at(kk);
            const auto& ks = tape.kh.at(kk);
            const auto& vs = tape.vh.at(kk);
            const auto& atts = tape.att.at(kk);
            const auto out = static_cast<Eigen::Index>(cfg.out_dim(kk));
            const auto heads = static_cast<Eigen::Index>(cfg.heads);
            const Eigen::Index dhd = out / heads;
            const double scale = 1.0 / std::sqrt(static_cast<double>(dhd));
            std::vector<Eigen::VectorXd> dq(n, Eigen::VectorXd::Zero(out));
            std::vector<Eigen::VectorXd> dk(n, Eigen::VectorXd::Zero(out));
            std::vector<Eigen::VectorXd> dv(n, Eigen::VectorXd::Zero(out));

            for (std::size_t i = 0; i < n; ++i) {
                if (dpre[i].isZero(0.0)) continue;
                const auto deg = static_cast<Eigen::Index>(g.in[i].size() + 1);
                auto src = [&](Eigen::Index p) -> std::size_t { return p == 0 ? i : g.in[i][p - 1]; };
                auto gp = [&](Eigen::Index p) {
                    return p == 0 ? g.delta[i] : gate(g, alpha, i, static_cast<std::size_t>(p - 1));
                };
                Eigen::VectorXd dgate = Eigen::VectorXd::Zero(deg);
                for (Eigen::Index hd = 0; hd < heads; ++hd) {
                    const auto d_o = dpre[i].segment(hd * dhd, dhd);
                    const auto a = atts[i].row(hd);
                    Eigen::VectorXd da(deg);
                    for (Eigen::Index p = 0; p < deg; ++p) {
                        const auto j = src(p);
                        const double vdot = d_o.dot(vs[j].segment(hd * dhd, dhd));
                        da(p) = gp(p) * vdot;
                        dv[j].segment(hd * dhd, dhd) += (a(p) * gp(p)) * d_o;
                        dgate(p) += a(p) * vdot;
                    }
                    const double mean_da = a.dot(da);
                    for (Eigen::Index p = 0; p < deg; ++p) {
                        const auto j = src(p);
                        const double de = a(p) * (da(p) - mean_da);
                        if (de == 0.0) continue;
                        const auto qi = qs[i].segment(hd * dhd, dhd);
                        const auto kj = ks[j].segment(hd * dhd, dhd);
                        dq[i].segment(hd * dhd, dhd) += (de * gp(p) * scale) * kj;
                        dk[j].segment(hd * dhd, dhd) += (de * gp(p) * scale) * qi;
                        dgate(p) += de * qi.dot(kj) * scale;
                    }
                }
                for (std::size_t p = 0; p < g.in[i].size(); ++p) {
                    d_alpha[i][p] += dgate(static_cast<Eigen::Index>(p + 1)) * g.delta[g.in[i][p]];
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (!dq[i].isZero(0.0)) {
                    glayer.wq += dq[i] * h_in[i].transpose();
                    dprev[i] += layer.wq.transpose() * dq[i];
                }
                if (!dk[i].isZero(0.0)) {
                    glayer.wk += dk[i] * h_in[i].transpose();
                    dprev[i] += layer.wk.transpose() * dk[i];
                }
                if (!dv[i].isZero(0.0)) {
                    glayer.wv += dv[i] * h_in[i].transpose();
                    dprev[i] += layer.wv.transpose() * dv[i];
                }
            }
        }
        dh = std::move(dprev);
    }
    return d_alpha;
}

}  // namespace cgrag
