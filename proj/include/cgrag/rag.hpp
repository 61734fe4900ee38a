#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgrag/retrieval.hpp"

namespace cgrag {

enum class QuestionKind { TrueFalse, MultipleChoice, Generative };

std::string to_string(QuestionKind k);
/// Accepts "true_false", "multiple_choice", "generative".
QuestionKind parse_question_kind(const std::string& s);

struct TranscriptEntry {
    std::string purpose;  ///< "summarize:<chunk id>", "answer", "answer-retry"
    std::string prompt;
    std::string completion;
};

/// Boundary to the external language model. complete() is safe to call from
/// several threads; every call is appended to the client's log.
class LMClient {
public:
    LMClient() = default;
    LMClient(LMClient&& o) noexcept : log_(std::move(o.log_)) {}
    LMClient& operator=(LMClient&&) = delete;
    virtual ~LMClient() = default;

    std::string complete(const std::string& prompt);

    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual std::size_t max_in_flight() const { return 1; }

    [[nodiscard]] std::vector<TranscriptEntry> log() const;
    [[nodiscard]] std::size_t calls() const;

protected:
    virtual std::string do_complete(const std::string& prompt) = 0;

private:
    mutable std::mutex mu_;
    std::vector<TranscriptEntry> log_;
};

struct RemoteChatConfig {
    std::string url;  ///< full chat-completions URL
    std::string model;
    std::string api_key;
    std::size_t max_in_flight = 4;
    double timeout_s = 60.0;

    /// CGRAG_LM_URL, CGRAG_LM_MODEL, CGRAG_LM_API_KEY. Throws ConfigError
    /// naming each missing variable.
    static RemoteChatConfig from_env();
};

/// POST {"model","messages":[{"role":"user","content"}]} and read
/// choices[0].message.content.
class RemoteChatClient final : public LMClient {
public:
    explicit RemoteChatClient(RemoteChatConfig cfg);
    ~RemoteChatClient() override;

    [[nodiscard]] std::string id() const override { return "remote-chat(" + cfg_.model + ")"; }
    [[nodiscard]] std::size_t max_in_flight() const override { return cfg_.max_in_flight; }

protected:
    std::string do_complete(const std::string& prompt) override;

private:
    struct Limiter;
    RemoteChatConfig cfg_;
    std::unique_ptr<Limiter> limiter_;
};

/// Deterministic offline client. Rules are tried in order; the first whose
/// regex matches anywhere in the prompt supplies the response. "{{echo}}" in a
/// response is replaced by the full prompt.
class ScriptedMockClient final : public LMClient {
public:
    struct Rule {
        std::string pattern;
        std::string response;
    };

    ScriptedMockClient(std::vector<Rule> rules, std::string fallback);
    /// {"rules":[{"pattern","response"}], "default": str}. Throws InputError
    /// on malformed files or invalid regexes.
    static ScriptedMockClient load(const std::filesystem::path& path);
    /// Every prompt is answered with itself.
    static ScriptedMockClient echo();

    [[nodiscard]] std::string id() const override { return "scripted-mock"; }

protected:
    std::string do_complete(const std::string& prompt) override;

private:
    std::vector<Rule> rules_;
    std::vector<std::regex> compiled_;
    std::string fallback_;
};

/// Versioned prompt templates shipped with the library.
struct PromptTemplate {
    std::string name;
    std::string text;
    [[nodiscard]] std::string hash() const;  ///< sha256 of text
};
const PromptTemplate& summarize_template();
const PromptTemplate& answer_template(QuestionKind kind);

/// Replaces every "{{key}}" occurrence.
std::string render_template(const std::string& text, const std::map<std::string, std::string>& values);

inline constexpr const char* kNoContextMarker = "(no additional context)";

struct RagConfig {
    std::size_t summary_words = 200;
};

std::string build_summarize_prompt(const std::string& query, const ContextSubgraph& subgraph, const ChunkStore& store,
                                   const RagConfig& cfg = {});

/// Summary text for one subgraph. An empty completion is retried once, then
/// raises ServiceError. Transcript entries are appended to `transcript` when given.
std::string summarize_subgraph(LMClient& client, const std::string& query, const ContextSubgraph& subgraph,
                               const ChunkStore& store, const RagConfig& cfg = {},
                               std::vector<TranscriptEntry>* transcript = nullptr);

struct Answer {
    std::string text;                 ///< raw completion (last attempt)
    std::optional<std::string> label; ///< yes/no/maybe or option letter; empty for abstention
    bool abstained = false;
};

/// yes/no/maybe when exactly one of them occurs as a word.
std::optional<std::string> parse_true_false(const std::string& completion);
/// Option letter "a".."z" within `option_count`, from "(c)", "c)", "c." or a bare "c".
std::optional<std::string> parse_option_letter(const std::string& completion, std::size_t option_count);

std::string build_answer_prompt(const std::string& query, std::span<const std::string> summaries, QuestionKind kind,
                                std::span<const std::string> options = {});

/// Unparseable constrained answers get one reprompt, then count as abstention.
Answer generate_answer(LMClient& client, const std::string& query, std::span<const std::string> summaries,
                       QuestionKind kind, std::span<const std::string> options = {},
                       std::vector<TranscriptEntry>* transcript = nullptr);

struct SubgraphSummary {
    std::string center_id;
    std::string summary;
};

struct AnswerRecord {
    std::string query;
    QuestionKind kind = QuestionKind::Generative;
    std::vector<SubgraphSummary> summaries;  ///< retrieval rank order
    Answer answer;
    std::vector<std::string> retrieved;      ///< every chunk id in the retrieved subgraphs
    std::map<std::string, std::string> templates;  ///< template name -> sha256
    std::vector<TranscriptEntry> transcript;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    void save(const std::filesystem::path& path, const nlohmann::ordered_json& effective_config = {}) const;
};

/// Retrieve Top-N, summarize every subgraph (concurrently up to the client's
/// in-flight limit), then generate. Throws InputError without contacting the
/// client when retrieval returns nothing.
AnswerRecord answer_pipeline(const std::string& query, const Retriever& retriever, std::size_t top_n, LMClient& client,
                             QuestionKind kind, std::span<const std::string> options = {},
                             const RagConfig& cfg = {});

}  // namespace cgrag
