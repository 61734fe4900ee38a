#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgrag/rag.hpp"
#include "cgrag/retrieval.hpp"

namespace cgrag {

struct QAItem {
    std::string qid;
    std::string question;
    QuestionKind kind = QuestionKind::Generative;
    std::vector<std::string> options;  ///< multiple choice only
    std::string answer;                ///< yes/no/maybe, option text, or free text
    std::vector<std::string> gold_chunks;
    std::vector<std::string> gold_docs;

    /// Throws InputError when the item violates its kind's constraints.
    void validate() const;
    [[nodiscard]] bool has_retrieval_gold() const { return !gold_chunks.empty() || !gold_docs.empty(); }
};

/// JSON Lines {"qid","question","kind","options"?,"answer","gold_chunks"?,"gold_docs"?}.
/// Errors carry the line number; duplicate qids are rejected.
std::vector<QAItem> load_qa_dataset(const std::filesystem::path& path);

/// 1 iff a gold id occurs in the first k entries. Throws InputError for k == 0
/// or an empty gold set.
int hit_at_k(std::span<const std::string> ranked, const std::set<std::string>& gold, std::size_t k);

struct ReciprocalRank {
    double value = 0.0;
    bool gold_absent = false;
};
/// 1 / (1-based position of gold); 0 with the flag set when absent.
ReciprocalRank mrr(std::span<const std::string> ranked, const std::string& gold);

struct AccuracyF1 {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};
/// Exact-match accuracy and F1 macro-averaged over the labels of `label_set`
/// that occur as a gold or a prediction. nullopt predictions are abstentions:
/// wrong for accuracy and a missed recall for their gold label.
AccuracyF1 accuracy_f1(std::span<const std::optional<std::string>> predictions, std::span<const std::string> golds,
                       const std::set<std::string>& label_set);

struct EvalRow {
    std::string qid;
    QuestionKind kind = QuestionKind::Generative;
    bool retrieval_scored = false;
    std::size_t gold_rank = 0;  ///< 1-based rank of the first gold chunk; 0 when none retrieved
    int hit1 = 0;
    int hit3 = 0;
    double rr = 0.0;
    bool answered = false;
    std::string gold_label;                 ///< yes/no/maybe or option letter
    std::optional<std::string> prediction;  ///< nullopt = abstention
    std::string answer_text;
    double option_rr = 0.0;  ///< multiple choice only
    std::string error;
};

struct MetricAggregate {
    double value = 0.0;
    std::size_t count = 0;

    bool operator==(const MetricAggregate&) const = default;
};

struct EvalAggregates {
    MetricAggregate hit1, hit3, mrr;
    std::size_t retrieval_excluded = 0;
    bool answers_present = false;
    MetricAggregate tf_accuracy, tf_macro_f1;
    MetricAggregate mc_accuracy, mc_macro_f1, mc_mrr;
    std::size_t generative_answered = 0;
    std::size_t failures = 0;

    bool operator==(const EvalAggregates&) const = default;
};

/// Recomputes every aggregate from the rows.
EvalAggregates aggregate(std::span<const EvalRow> rows);

struct EvalReport {
    std::vector<EvalRow> rows;  ///< sorted by qid
    EvalAggregates aggregates;
    nlohmann::ordered_json fingerprint;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    /// Writes the JSON report and the per-row CSV. Throws NumericError if the stored
    /// aggregates disagree with a recomputation from the rows.
    void save(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const;
};

enum class GoldMatch {
    Auto,      ///< chunk ids when present, otherwise documents
    Chunks,
    Documents,
};

struct EvalConfig {
    std::size_t top_n = 3;  ///< subgraphs handed to the answer pipeline
    GoldMatch gold = GoldMatch::Auto;
    RagConfig rag;
    std::size_t workers = 0;  ///< items evaluated concurrently; 0 = hardware threads
};

/// sha256 over the parameter configuration and raw values.
std::string params_fingerprint(const EncoderParams& params);

/// Retrieval metrics from full rankings for items with gold chunks or docs.
/// Answer metrics only when `client` is non-null. Per-item errors are
/// recorded in the row and do not stop the run.
EvalReport run_eval(std::span<const QAItem> dataset, const Retriever& retriever, LMClient* client,
                    const EvalConfig& cfg = {});

}  // namespace cgrag
