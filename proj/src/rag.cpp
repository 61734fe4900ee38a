#include "cgrag/rag.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <semaphore>
#include <set>

#include "cgrag/error.hpp"
#include "cgrag/hash.hpp"
#include "http.hpp"
#include "prompts.hpp"

namespace cgrag {

using ojson = nlohmann::ordered_json;

std::string to_string(QuestionKind k) {
    switch (k) {
        case QuestionKind::TrueFalse: return "true_false";
        case QuestionKind::MultipleChoice: return "multiple_choice";
        case QuestionKind::Generative: return "generative";
    }
    return "generative";
}

QuestionKind parse_question_kind(const std::string& s) {
    if (s == "true_false") return QuestionKind::TrueFalse;
    if (s == "multiple_choice") return QuestionKind::MultipleChoice;
    if (s == "generative") return QuestionKind::Generative;
    throw InputError("unknown question kind \"" + s + "\" (expected true_false, multiple_choice or generative)");
}

// -- clients -------------------------------------------------------------------

std::string LMClient::complete(const std::string& prompt) {
    auto completion = do_complete(prompt);
    std::lock_guard lock(mu_);
    log_.push_back({"", prompt, completion});
    return completion;
}

std::vector<TranscriptEntry> LMClient::log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::size_t LMClient::calls() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

RemoteChatConfig RemoteChatConfig::from_env() {
    RemoteChatConfig cfg;
    std::vector<std::string> missing;
    auto read = [&](const char* name, std::string& dst) {
        const char* v = std::getenv(name);
        if (v && *v) {
            dst = v;
        } else {
            missing.push_back(std::string(name) + " is not set");
        }
    };
    read("CGRAG_LM_URL", cfg.url);
    read("CGRAG_LM_MODEL", cfg.model);
    read("CGRAG_LM_API_KEY", cfg.api_key);
    if (!missing.empty()) throw ConfigError(missing);
    return cfg;
}

struct RemoteChatClient::Limiter {
    explicit Limiter(std::size_t n) : sem(static_cast<std::ptrdiff_t>(n)) {}
    std::counting_semaphore<1024> sem;
};

RemoteChatClient::RemoteChatClient(RemoteChatConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.max_in_flight == 0 || cfg_.max_in_flight > 1024) {
        throw ConfigError({"lm max_in_flight must be in [1, 1024]"});
    }
    (void)detail::parse_url(cfg_.url);
    limiter_ = std::make_unique<Limiter>(cfg_.max_in_flight);
}

RemoteChatClient::~RemoteChatClient() = default;

std::string RemoteChatClient::do_complete(const std::string& prompt) {
    limiter_->sem.acquire();
    nlohmann::json reply;
    try {
        nlohmann::json body = {{"model", cfg_.model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        reply = detail::post_json(cfg_.url, cfg_.api_key, body, cfg_.timeout_s);
    } catch (...) {
        limiter_->sem.release();
        throw;
    }
    limiter_->sem.release();
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ServiceError("chat reply lacks choices[0].message.content");
    }
}

ScriptedMockClient::ScriptedMockClient(std::vector<Rule> rules, std::string fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {
    for (const auto& r : rules_) {
        try {
            compiled_.emplace_back(r.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw InputError("invalid mock pattern \"" + r.pattern + "\": " + e.what());
        }
    }
}

ScriptedMockClient ScriptedMockClient::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open mock script " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        std::vector<Rule> rules;
        for (const auto& r : j.value("rules", nlohmann::json::array())) {
            rules.push_back({r.at("pattern").get<std::string>(), r.at("response").get<std::string>()});
        }
        return {std::move(rules), j.value("default", std::string{})};
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed mock script " + path.string() + ": " + e.what());
    }
}

ScriptedMockClient ScriptedMockClient::echo() { return {{}, "{{echo}}"}; }

std::string ScriptedMockClient::do_complete(const std::string& prompt) {
    const std::string* response = &fallback_;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (std::regex_search(prompt, compiled_[i])) {
            response = &rules_[i].response;
            break;
        }
    }
    return render_template(*response, {{"echo", prompt}});
}

// -- prompts -------------------------------------------------------------------

std::string PromptTemplate::hash() const { return sha256_hex(text); }

const PromptTemplate& summarize_template() {
    static const PromptTemplate t{"summarize", detail::kSummarizePrompt};
    return t;
}

const PromptTemplate& answer_template(QuestionKind kind) {
    static const PromptTemplate tf{"answer_true_false", detail::kAnswerTrueFalsePrompt};
    static const PromptTemplate mc{"answer_multiple_choice", detail::kAnswerMultipleChoicePrompt};
    static const PromptTemplate gen{"answer_generative", detail::kAnswerGenerativePrompt};
    switch (kind) {
        case QuestionKind::TrueFalse: return tf;
        case QuestionKind::MultipleChoice: return mc;
        case QuestionKind::Generative: return gen;
    }
    return gen;
}

std::string render_template(const std::string& text, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = text.find("}}", open + 2);
        if (close == std::string::npos) break;
        out.append(text, pos, open - pos);
        const auto it = values.find(text.substr(open + 2, close - open - 2));
        if (it != values.end()) {
            out += it->second;
        } else {
            out.append(text, open, close + 2 - open);
        }
        pos = close + 2;
    }
    out.append(text, pos, std::string::npos);
    return out;
}

namespace {

const Chunk& chunk_or_throw(const ChunkStore& store, const ChunkId& id) {
    const auto at = store.find(id);
    if (!at) throw InputError("chunk " + id.str() + " has no stored text");
    return store.chunks[*at];
}

}  // namespace

std::string build_summarize_prompt(const std::string& query, const ContextSubgraph& subgraph, const ChunkStore& store,
                                   const RagConfig& cfg) {
    if (subgraph.nodes.empty()) throw InputError("cannot summarize an empty subgraph");
    std::string context;
    for (std::size_t k = 1; k < subgraph.nodes.size(); ++k) {
        const auto& id = subgraph.nodes[k];
        std::set<std::string> kinds;
        for (const auto& e : subgraph.edges) {
            if (e.src == id && e.dst == subgraph.center) kinds.insert(std::string(to_string(e.kind)));
        }
        std::string kind_list;
        for (const auto& s : kinds) kind_list += (kind_list.empty() ? "" : ", ") + s;
        context += "[" + id.str() + "] (" + kind_list + ")\n" + chunk_or_throw(store, id).text + "\n\n";
    }
    if (context.empty()) {
        context = kNoContextMarker;
    } else {
        context.resize(context.size() - 2);
    }
    return render_template(summarize_template().text,
                           {{"query", query},
                            {"center_id", subgraph.center.str()},
                            {"center_text", chunk_or_throw(store, subgraph.center).text},
                            {"context", context},
                            {"max_words", std::to_string(cfg.summary_words)}});
}

namespace {

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string summarize_subgraph(LMClient& client, const std::string& query, const ContextSubgraph& subgraph,
                               const ChunkStore& store, const RagConfig& cfg, std::vector<TranscriptEntry>* transcript) {
    const auto prompt = build_summarize_prompt(query, subgraph, store, cfg);
    const std::string purpose = "summarize:" + subgraph.center.str();
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto completion = client.complete(prompt);
        if (transcript) transcript->push_back({purpose, prompt, completion});
        if (!blank(completion)) return completion;
    }
    throw ServiceError("language model returned an empty summary for " + subgraph.center.str() + " twice");
}

// -- answers -------------------------------------------------------------------

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

std::optional<std::string> parse_true_false(const std::string& completion) {
    static const std::regex word(R"(\b(yes|no|maybe)\b)");
    const auto text = lower(completion);
    std::set<std::string> seen;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), word); it != std::sregex_iterator(); ++it) {
        seen.insert((*it)[1].str());
    }
    if (seen.size() != 1) return std::nullopt;
    return *seen.begin();
}

std::optional<std::string> parse_option_letter(const std::string& completion, std::size_t option_count) {
    const auto text = lower(trim(completion));
    auto valid = [&](char c) { return c >= 'a' && static_cast<std::size_t>(c - 'a') < option_count; };

    static const std::regex paren(R"(\(([a-z])\))");
    std::set<char> seen;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), paren); it != std::sregex_iterator(); ++it) {
        seen.insert((*it)[1].str()[0]);
    }
    if (seen.size() == 1 && valid(*seen.begin())) return std::string(1, *seen.begin());
    if (!seen.empty()) return std::nullopt;

    static const std::regex bare(R"(^([a-z])(\)|\.|:)?(\s.*)?$)");
    std::smatch m;
    if (std::regex_match(text, m, bare) && valid(m[1].str()[0])) return m[1].str();
    return std::nullopt;
}

std::string build_answer_prompt(const std::string& query, std::span<const std::string> summaries, QuestionKind kind,
                                std::span<const std::string> options) {
    if (summaries.empty()) throw InputError("answer generation needs at least one summary");
    std::string joined;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        joined += "[" + std::to_string(i + 1) + "] " + summaries[i] + (i + 1 < summaries.size() ? "\n\n" : "");
    }
    std::map<std::string, std::string> values{{"query", query}, {"summaries", joined}};
    if (kind == QuestionKind::MultipleChoice) {
        if (options.size() < 2 || options.size() > 26) throw InputError("multiple choice needs 2 to 26 options");
        std::string opts;
        for (std::size_t i = 0; i < options.size(); ++i) {
            opts += "(" + std::string(1, static_cast<char>('a' + i)) + ") " + options[i] + "\n";
        }
        opts.pop_back();
        values["options"] = opts;
    }
    return render_template(answer_template(kind).text, values);
}

Answer generate_answer(LMClient& client, const std::string& query, std::span<const std::string> summaries,
                       QuestionKind kind, std::span<const std::string> options,
                       std::vector<TranscriptEntry>* transcript) {
    const auto prompt = build_answer_prompt(query, summaries, kind, options);
    auto parse = [&](const std::string& text) -> std::optional<std::string> {
        switch (kind) {
            case QuestionKind::TrueFalse: return parse_true_false(text);
            case QuestionKind::MultipleChoice: return parse_option_letter(text, options.size());
            case QuestionKind::Generative: return blank(text) ? std::nullopt : std::optional<std::string>(trim(text));
        }
        return std::nullopt;
    };

    Answer ans;
    ans.text = client.complete(prompt);
    if (transcript) transcript->push_back({"answer", prompt, ans.text});
    ans.label = parse(ans.text);
    if (ans.label) return ans;

    std::string retry = prompt + "\n\nYour previous reply could not be used. ";
    switch (kind) {
        case QuestionKind::TrueFalse: retry += "Reply with only one word: yes, no, or maybe."; break;
        case QuestionKind::MultipleChoice: retry += "Reply with only the option letter in parentheses."; break;
        case QuestionKind::Generative: retry += "Reply with a non-empty answer."; break;
    }
    ans.text = client.complete(retry);
    if (transcript) transcript->push_back({"answer-retry", retry, ans.text});
    ans.label = parse(ans.text);
    ans.abstained = !ans.label.has_value();
    return ans;
}

// -- pipeline ------------------------------------------------------------------

ojson AnswerRecord::to_json() const {
    ojson j;
    j["format_version"] = 1;
    j["query"] = query;
    j["kind"] = to_string(kind);
    j["summaries"] = ojson::array();
    for (const auto& s : summaries) j["summaries"].push_back({{"center_id", s.center_id}, {"summary", s.summary}});
    j["answer"] = {{"text", answer.text},
                   {"label", answer.label ? ojson(*answer.label) : ojson(nullptr)},
                   {"abstained", answer.abstained}};
    j["retrieved"] = retrieved;
    j["templates"] = ojson::object();
    for (const auto& [name, h] : templates) j["templates"][name] = h;
    j["transcript"] = ojson::array();
    for (const auto& t : transcript) {
        j["transcript"].push_back({{"purpose", t.purpose}, {"prompt", t.prompt}, {"completion", t.completion}});
    }
    return j;
}

void AnswerRecord::save(const std::filesystem::path& path, const ojson& effective_config) const {
    auto j = to_json();
    if (!effective_config.is_null()) j["config"] = effective_config;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

AnswerRecord answer_pipeline(const std::string& query, const Retriever& retriever, std::size_t top_n, LMClient& client,
                             QuestionKind kind, std::span<const std::string> options, const RagConfig& cfg) {
    if (retriever.index().size() == 0 || top_n == 0) {
        throw InputError("no context retrieved for \"" + query + "\"; refusing to answer without context");
    }
    const auto result = retriever.retrieve(query, top_n);
    if (result.subgraphs.empty()) {
        throw InputError("no context retrieved for \"" + query + "\"; refusing to answer without context");
    }
    const auto& store = retriever.index().store();

    AnswerRecord rec;
    rec.query = query;
    rec.kind = kind;
    rec.templates[summarize_template().name] = summarize_template().hash();
    rec.templates[answer_template(kind).name] = answer_template(kind).hash();
    std::set<std::string> retrieved;
    for (const auto& sg : result.subgraphs) {
        for (const auto& id : sg.nodes) retrieved.insert(id.str());
    }
    rec.retrieved.assign(retrieved.begin(), retrieved.end());

    // Summaries run in waves of at most max_in_flight; each keeps a private
    // transcript so the record stays in rank order.
    const std::size_t n = result.subgraphs.size();
    std::vector<std::string> summaries(n);
    std::vector<std::vector<TranscriptEntry>> parts(n);
    const std::size_t width = std::max<std::size_t>(1, client.max_in_flight());
    for (std::size_t begin = 0; begin < n; begin += width) {
        const std::size_t end = std::min(n, begin + width);
        if (end - begin == 1) {
            summaries[begin] = summarize_subgraph(client, query, result.subgraphs[begin], store, cfg, &parts[begin]);
            continue;
        }
        std::vector<std::future<std::string>> wave;
        for (std::size_t i = begin; i < end; ++i) {
            wave.push_back(std::async(std::launch::async, [&, i] {
                return summarize_subgraph(client, query, result.subgraphs[i], store, cfg, &parts[i]);
            }));
        }
        for (std::size_t i = begin; i < end; ++i) summaries[i] = wave[i - begin].get();
    }
    for (std::size_t i = 0; i < n; ++i) {
        rec.summaries.push_back({result.subgraphs[i].center.str(), summaries[i]});
        for (auto& t : parts[i]) rec.transcript.push_back(std::move(t));
    }
    rec.answer = generate_answer(client, query, summaries, kind, options, &rec.transcript);
    return rec;
}

}  // namespace cgrag
