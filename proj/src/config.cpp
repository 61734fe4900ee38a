#include "cgrag/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cgrag/error.hpp"

namespace cgrag {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

struct Parser {
    const EnvLookup& env;
    std::filesystem::path base;
    std::vector<std::string> problems;

    std::string interpolate(const std::string& key, const std::string& value) {
        std::string out;
        std::size_t pos = 0;
        while (true) {
            const auto open = value.find("${", pos);
            if (open == std::string::npos) break;
            const auto close = value.find('}', open);
            if (close == std::string::npos) {
                problems.push_back(key + ": unterminated ${ in value");
                return value;
            }
            out.append(value, pos, open - pos);
            const auto name = value.substr(open + 2, close - open - 2);
            if (auto v = env(name)) {
                out += *v;
            } else {
                problems.push_back(key + ": environment variable " + name + " is not set");
            }
            pos = close + 1;
        }
        out.append(value, pos, std::string::npos);
        return out;
    }

    void size(const std::string& key, const std::string& v, std::size_t& dst, std::size_t min = 0) {
        std::size_t x = 0;
        const auto* end = v.data() + v.size();
        const auto r = std::from_chars(v.data(), end, x);
        if (r.ec != std::errc{} || r.ptr != end) {
            problems.push_back(key + ": expected a non-negative integer, got \"" + v + "\"");
        } else if (x < min) {
            problems.push_back(key + ": must be >= " + std::to_string(min) + ", got " + v);
        } else {
            dst = x;
        }
    }

    void u64(const std::string& key, const std::string& v, std::uint64_t& dst) {
        std::uint64_t x = 0;
        const auto* end = v.data() + v.size();
        const auto r = std::from_chars(v.data(), end, x);
        if (r.ec != std::errc{} || r.ptr != end) {
            problems.push_back(key + ": expected a non-negative integer, got \"" + v + "\"");
        } else {
            dst = x;
        }
    }

    void real(const std::string& key, const std::string& v, double& dst) {
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) {
            problems.push_back(key + ": expected a number, got \"" + v + "\"");
        } else {
            dst = x;
        }
    }

    void boolean(const std::string& key, const std::string& v, bool& dst) {
        if (v == "true" || v == "1" || v == "yes") {
            dst = true;
        } else if (v == "false" || v == "0" || v == "no") {
            dst = false;
        } else {
            problems.push_back(key + ": expected true or false, got \"" + v + "\"");
        }
    }

    void path(const std::string& v, std::filesystem::path& dst) {
        std::filesystem::path p(v);
        dst = p.is_relative() && !base.empty() ? base / p : p;
    }

    void choice(const std::string& key, const std::string& v, std::string& dst, std::set<std::string> allowed) {
        if (!allowed.contains(v)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            problems.push_back(key + ": expected one of " + list + ", got \"" + v + "\"");
        } else {
            dst = v;
        }
    }

    template <typename Enum, typename ParseFn>
    void enumeration(const std::string& key, const std::string& v, Enum& dst, ParseFn parse) {
        try {
            dst = parse(v);
        } catch (const InputError& e) {
            problems.push_back(key + ": " + e.what());
        }
    }
};

}  // namespace

EncoderConfig RunConfig::encoder() const {
    EncoderConfig c;
    c.variant = encoder_variant;
    c.layers = encoder_layers;
    c.embed_dim = dense_dim;
    c.hidden_dim = encoder_hidden_dim;
    c.heads = encoder_heads;
    c.pos_map = pos_map;
    c.seed = seed;
    return c;
}

EncoderParams RunConfig::initial_params() const {
    return encoder_init == "fusion" ? EncoderParams::fusion_start(dense_dim, pos_map, seed)
                                    : EncoderParams::init(encoder());
}

TrainConfig RunConfig::training() const {
    TrainConfig t;
    t.epochs = epochs;
    t.negatives = negatives;
    t.seed = seed;
    t.optimizer.lr = lr;
    t.optimizer.weight_decay = weight_decay;
    return t;
}

nlohmann::ordered_json RunConfig::to_json() const {
    auto secret = [](const std::string& s) { return s.empty() ? std::string{} : std::string("<redacted>"); };
    nlohmann::ordered_json j;
    j["corpus"] = corpus.string();
    j["cache_dir"] = cache_dir.string();
    j["chunk_length"] = chunk_length;
    j["top_n_context"] = top_n_context;
    j["top_n_results"] = top_n_results;
    j["bm25.k1"] = bm25_k1;
    j["bm25.b"] = bm25_b;
    j["pos_map"] = std::string(to_string(pos_map));
    j["dense.provider"] = dense_provider;
    j["dense.dim"] = dense_dim;
    j["dense.normalize"] = dense_normalize;
    j["dense.url"] = dense_url;
    j["dense.model"] = dense_model;
    j["dense.api_key"] = secret(dense_api_key);
    j["dense.batch_size"] = dense_batch_size;
    j["dense.max_in_flight"] = dense_max_in_flight;
    j["encoder.variant"] = std::string(to_string(encoder_variant));
    j["encoder.layers"] = encoder_layers;
    j["encoder.hidden_dim"] = encoder_hidden_dim;
    j["encoder.heads"] = encoder_heads;
    j["encoder.init"] = encoder_init;
    j["train.dataset"] = train_dataset.string();
    j["train.label_fraction"] = label_fraction;
    j["train.epochs"] = epochs;
    j["train.negatives"] = negatives;
    j["train.lr"] = lr;
    j["train.weight_decay"] = weight_decay;
    j["lm.provider"] = lm_provider;
    j["lm.url"] = lm_url;
    j["lm.model"] = lm_model;
    j["lm.api_key"] = secret(lm_api_key);
    j["lm.script"] = lm_script.string();
    j["lm.max_in_flight"] = lm_max_in_flight;
    j["answer.summary_words"] = summary_words;
    j["seed"] = seed;
    return j;
}

std::optional<std::string> process_env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
}

RunConfig parse_config(std::string_view text, const EnvLookup& env, const std::filesystem::path& base_dir) {
    RunConfig c;
    Parser p{env, base_dir, {}};
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"corpus", [&](auto&, auto& v) { p.path(v, c.corpus); }},
        {"cache_dir", [&](auto&, auto& v) { p.path(v, c.cache_dir); }},
        {"chunk_length", [&](auto& k, auto& v) { p.size(k, v, c.chunk_length, 1); }},
        {"top_n_context", [&](auto& k, auto& v) { p.size(k, v, c.top_n_context, 1); }},
        {"top_n_results", [&](auto& k, auto& v) { p.size(k, v, c.top_n_results, 1); }},
        {"bm25.k1", [&](auto& k, auto& v) { p.real(k, v, c.bm25_k1); }},
        {"bm25.b", [&](auto& k, auto& v) { p.real(k, v, c.bm25_b); }},
        {"pos_map", [&](auto& k, auto& v) { p.enumeration(k, v, c.pos_map, parse_pos_map); }},
        {"dense.provider", [&](auto& k, auto& v) { p.choice(k, v, c.dense_provider, {"hash", "remote"}); }},
        {"dense.dim", [&](auto& k, auto& v) { p.size(k, v, c.dense_dim, 1); }},
        {"dense.normalize", [&](auto& k, auto& v) { p.boolean(k, v, c.dense_normalize); }},
        {"dense.url", [&](auto&, auto& v) { c.dense_url = v; }},
        {"dense.model", [&](auto&, auto& v) { c.dense_model = v; }},
        {"dense.api_key", [&](auto&, auto& v) { c.dense_api_key = v; }},
        {"dense.batch_size", [&](auto& k, auto& v) { p.size(k, v, c.dense_batch_size, 1); }},
        {"dense.max_in_flight", [&](auto& k, auto& v) { p.size(k, v, c.dense_max_in_flight, 1); }},
        {"encoder.variant", [&](auto& k, auto& v) { p.enumeration(k, v, c.encoder_variant, parse_variant); }},
        {"encoder.layers", [&](auto& k, auto& v) { p.size(k, v, c.encoder_layers, 1); }},
        {"encoder.hidden_dim", [&](auto& k, auto& v) { p.size(k, v, c.encoder_hidden_dim, 1); }},
        {"encoder.heads", [&](auto& k, auto& v) { p.size(k, v, c.encoder_heads, 1); }},
        {"encoder.init", [&](auto& k, auto& v) { p.choice(k, v, c.encoder_init, {"random", "fusion"}); }},
        {"train.dataset", [&](auto&, auto& v) { p.path(v, c.train_dataset); }},
        {"train.label_fraction", [&](auto& k, auto& v) { p.real(k, v, c.label_fraction); }},
        {"train.epochs", [&](auto& k, auto& v) { p.size(k, v, c.epochs); }},
        {"train.negatives", [&](auto& k, auto& v) { p.size(k, v, c.negatives, 1); }},
        {"train.lr", [&](auto& k, auto& v) { p.real(k, v, c.lr); }},
        {"train.weight_decay", [&](auto& k, auto& v) { p.real(k, v, c.weight_decay); }},
        {"lm.provider", [&](auto& k, auto& v) { p.choice(k, v, c.lm_provider, {"none", "remote", "mock"}); }},
        {"lm.url", [&](auto&, auto& v) { c.lm_url = v; }},
        {"lm.model", [&](auto&, auto& v) { c.lm_model = v; }},
        {"lm.api_key", [&](auto&, auto& v) { c.lm_api_key = v; }},
        {"lm.script", [&](auto&, auto& v) { p.path(v, c.lm_script); }},
        {"lm.max_in_flight", [&](auto& k, auto& v) { p.size(k, v, c.lm_max_in_flight, 1); }},
        {"answer.summary_words", [&](auto& k, auto& v) { p.size(k, v, c.summary_words, 1); }},
        {"seed", [&](auto& k, auto& v) { p.u64(k, v, c.seed); }},
    };

    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            p.problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const auto key = trim(std::string_view(body).substr(0, eq));
        const auto it = setters.find(key);
        if (it == setters.end()) {
            p.problems.push_back("line " + std::to_string(lineno) + ": unknown key \"" + key + "\"");
            continue;
        }
        if (!seen.insert(key).second) {
            p.problems.push_back("line " + std::to_string(lineno) + ": duplicate key \"" + key + "\"");
            continue;
        }
        it->second(key, p.interpolate(key, trim(std::string_view(body).substr(eq + 1))));
    }

    if (c.bm25_k1 < 0) p.problems.push_back("bm25.k1: must be >= 0");
    if (c.bm25_b < 0 || c.bm25_b > 1) p.problems.push_back("bm25.b: must lie in [0, 1]");
    if (!(c.label_fraction > 0 && c.label_fraction <= 1)) p.problems.push_back("train.label_fraction: must lie in (0, 1]");
    if (c.lr < 0) p.problems.push_back("train.lr: must be >= 0");
    if (c.weight_decay < 0) p.problems.push_back("train.weight_decay: must be >= 0");
    if (c.dense_provider == "remote") {
        if (c.dense_url.empty()) p.problems.push_back("dense.url: required when dense.provider = remote");
        if (c.dense_model.empty()) p.problems.push_back("dense.model: required when dense.provider = remote");
    }
    if (c.lm_provider == "remote") {
        if (c.lm_url.empty()) p.problems.push_back("lm.url: required when lm.provider = remote");
        if (c.lm_model.empty()) p.problems.push_back("lm.model: required when lm.provider = remote");
    }
    if (c.lm_provider == "mock" && c.lm_script.empty()) {
        p.problems.push_back("lm.script: required when lm.provider = mock");
    }
    if (c.encoder_init == "fusion" &&
        (c.encoder_variant != EncoderVariant::MeanLinear || c.encoder_layers != 1)) {
        p.problems.push_back("encoder.init: fusion requires encoder.variant = mean-linear and encoder.layers = 1");
    }
    try {
        c.encoder().validate();
    } catch (const ConfigError& e) {
        for (const auto& s : e.problems()) p.problems.push_back("encoder: " + s);
    }
    if (!p.problems.empty()) throw ConfigError(p.problems);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), process_env, path.parent_path());
}

}  // namespace cgrag
