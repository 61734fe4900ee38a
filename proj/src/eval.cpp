#include "cgrag/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "cgrag/error.hpp"
#include "cgrag/hash.hpp"

namespace cgrag {

using ojson = nlohmann::ordered_json;

namespace {

const std::set<std::string> kTrueFalseLabels{"yes", "no", "maybe"};

std::string option_letter(std::size_t i) { return std::string(1, static_cast<char>('a' + i)); }

std::string item_gold_label(const QAItem& item) {
    if (item.kind != QuestionKind::MultipleChoice) return item.answer;
    const auto it = std::find(item.options.begin(), item.options.end(), item.answer);
    return option_letter(static_cast<std::size_t>(it - item.options.begin()));
}

}  // namespace

void QAItem::validate() const {
    if (qid.empty()) throw InputError("QA item without qid");
    if (question.empty()) throw InputError("QA item " + qid + " has an empty question");
    switch (kind) {
        case QuestionKind::TrueFalse:
            if (!kTrueFalseLabels.contains(answer)) {
                throw InputError("QA item " + qid + ": true_false answer must be yes, no or maybe");
            }
            break;
        case QuestionKind::MultipleChoice:
            if (options.size() < 2 || options.size() > 26) {
                throw InputError("QA item " + qid + ": multiple_choice needs 2 to 26 options");
            }
            if (std::find(options.begin(), options.end(), answer) == options.end()) {
                throw InputError("QA item " + qid + ": answer is not one of the options");
            }
            break;
        case QuestionKind::Generative: break;
    }
}

std::vector<QAItem> load_qa_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open QA dataset " + path.string());
    std::vector<QAItem> items;
    std::set<std::string> qids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        QAItem item;
        try {
            const auto j = nlohmann::json::parse(line);
            item.qid = j.at("qid").is_string() ? j.at("qid").get<std::string>() : j.at("qid").dump();
            item.question = j.at("question").get<std::string>();
            item.kind = parse_question_kind(j.at("kind").get<std::string>());
            item.options = j.value("options", std::vector<std::string>{});
            item.answer = j.at("answer").get<std::string>();
            item.gold_chunks = j.value("gold_chunks", std::vector<std::string>{});
            item.gold_docs = j.value("gold_docs", std::vector<std::string>{});
        } catch (const nlohmann::json::exception& e) {
            throw InputError("malformed QA record at " + where + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(std::string(e.what()) + " at " + where);
        }
        if (item.kind == QuestionKind::TrueFalse) {
            std::transform(item.answer.begin(), item.answer.end(), item.answer.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        }
        try {
            item.validate();
        } catch (const InputError& e) {
            throw InputError(std::string(e.what()) + " at " + where);
        }
        if (!qids.insert(item.qid).second) throw InputError("duplicate qid \"" + item.qid + "\" at " + where);
        items.push_back(std::move(item));
    }
    return items;
}

int hit_at_k(std::span<const std::string> ranked, const std::set<std::string>& gold, std::size_t k) {
    if (k == 0) throw InputError("hit@k needs k >= 1");
    if (gold.empty()) throw InputError("hit@k needs a non-empty gold set");
    const auto limit = std::min(k, ranked.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (gold.contains(ranked[i])) return 1;
    }
    return 0;
}

ReciprocalRank mrr(std::span<const std::string> ranked, const std::string& gold) {
    const auto it = std::find(ranked.begin(), ranked.end(), gold);
    if (it == ranked.end()) return {0.0, true};
    return {1.0 / static_cast<double>(it - ranked.begin() + 1), false};
}

AccuracyF1 accuracy_f1(std::span<const std::optional<std::string>> predictions, std::span<const std::string> golds,
                       const std::set<std::string>& label_set) {
    if (predictions.size() != golds.size()) throw InputError("predictions and golds differ in length");
    if (golds.empty()) throw InputError("accuracy/F1 of an empty set");
    struct Counts {
        std::size_t tp = 0, fp = 0, fn = 0;
    };
    std::map<std::string, Counts> per;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const auto& p = predictions[i];
        if (p && *p == golds[i]) {
            ++correct;
            ++per[golds[i]].tp;
            continue;
        }
        ++per[golds[i]].fn;
        if (p) ++per[*p].fp;
    }
    AccuracyF1 out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(golds.size());
    double sum = 0.0;
    std::size_t labels = 0;
    for (const auto& label : label_set) {
        const auto it = per.find(label);
        if (it == per.end()) continue;
        const auto& c = it->second;
        sum += 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
        ++labels;
    }
    out.macro_f1 = labels ? sum / static_cast<double>(labels) : 0.0;
    return out;
}

EvalAggregates aggregate(std::span<const EvalRow> rows) {
    EvalAggregates a;
    double h1 = 0, h3 = 0, rr = 0, mc_rr = 0;
    std::vector<std::optional<std::string>> tf_pred, mc_pred;
    std::vector<std::string> tf_gold, mc_gold;
    std::set<std::string> mc_labels;
    for (const auto& r : rows) {
        if (!r.error.empty()) ++a.failures;
        if (r.retrieval_scored) {
            h1 += r.hit1;
            h3 += r.hit3;
            rr += r.rr;
            ++a.hit1.count;
        } else if (r.error.empty()) {
            ++a.retrieval_excluded;
        }
        if (!r.answered) continue;
        a.answers_present = true;
        switch (r.kind) {
            case QuestionKind::TrueFalse:
                tf_pred.push_back(r.prediction);
                tf_gold.push_back(r.gold_label);
                break;
            case QuestionKind::MultipleChoice:
                mc_pred.push_back(r.prediction);
                mc_gold.push_back(r.gold_label);
                mc_labels.insert(r.gold_label);
                if (r.prediction) mc_labels.insert(*r.prediction);
                mc_rr += r.option_rr;
                break;
            case QuestionKind::Generative: ++a.generative_answered; break;
        }
    }
    a.hit3.count = a.mrr.count = a.hit1.count;
    if (a.hit1.count) {
        const auto n = static_cast<double>(a.hit1.count);
        a.hit1.value = h1 / n;
        a.hit3.value = h3 / n;
        a.mrr.value = rr / n;
    }
    if (!tf_gold.empty()) {
        const auto m = accuracy_f1(tf_pred, tf_gold, kTrueFalseLabels);
        a.tf_accuracy = {m.accuracy, tf_gold.size()};
        a.tf_macro_f1 = {m.macro_f1, tf_gold.size()};
    }
    if (!mc_gold.empty()) {
        const auto m = accuracy_f1(mc_pred, mc_gold, mc_labels);
        a.mc_accuracy = {m.accuracy, mc_gold.size()};
        a.mc_macro_f1 = {m.macro_f1, mc_gold.size()};
        a.mc_mrr = {mc_rr / static_cast<double>(mc_gold.size()), mc_gold.size()};
    }
    return a;
}

namespace {

ojson metric_json(const MetricAggregate& m) {
    if (m.count == 0) return {{"value", nullptr}, {"count", 0}};
    return {{"value", m.value}, {"count", m.count}};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

ojson EvalReport::to_json() const {
    const auto& a = aggregates;
    ojson j;
    j["format_version"] = 1;
    j["fingerprint"] = fingerprint;
    ojson retrieval;
    retrieval["hit@1"] = metric_json(a.hit1);
    retrieval["hit@3"] = metric_json(a.hit3);
    retrieval["mrr"] = metric_json(a.mrr);
    retrieval["excluded_without_gold"] = a.retrieval_excluded;
    j["retrieval"] = retrieval;
    if (a.answers_present) {
        ojson ans;
        ans["true_false"] = {{"accuracy", metric_json(a.tf_accuracy)}, {"macro_f1", metric_json(a.tf_macro_f1)}};
        ans["multiple_choice"] = {{"accuracy", metric_json(a.mc_accuracy)},
                                  {"macro_f1", metric_json(a.mc_macro_f1)},
                                  {"mrr", metric_json(a.mc_mrr)}};
        ans["generative"] = {{"answered", a.generative_answered}};
        j["answers"] = ans;
    } else {
        j["answers"] = nullptr;
    }
    j["failures"] = a.failures;
    j["rows"] = ojson::array();
    for (const auto& r : rows) {
        ojson row;
        row["qid"] = r.qid;
        row["kind"] = to_string(r.kind);
        row["retrieval_scored"] = r.retrieval_scored;
        row["gold_rank"] = r.gold_rank;
        row["hit1"] = r.hit1;
        row["hit3"] = r.hit3;
        row["rr"] = r.rr;
        row["answered"] = r.answered;
        row["gold_label"] = r.gold_label;
        row["prediction"] = r.prediction ? ojson(*r.prediction) : ojson(nullptr);
        row["answer_text"] = r.answer_text;
        row["option_rr"] = r.option_rr;
        row["error"] = r.error;
        j["rows"].push_back(std::move(row));
    }
    return j;
}

void EvalReport::save(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const {
    if (!(aggregate(rows) == aggregates)) throw NumericError("report aggregates do not match its rows");
    {
        std::ofstream out(json_path, std::ios::binary);
        if (!out) throw InputError("cannot write " + json_path.string());
        out << to_json().dump(2) << '\n';
    }
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw InputError("cannot write " + csv_path.string());
    out << std::setprecision(17);
    out << "qid,kind,retrieval_scored,gold_rank,hit1,hit3,rr,answered,gold_label,prediction,abstained,option_rr,error\n";
    for (const auto& r : rows) {
        out << csv_field(r.qid) << ',' << to_string(r.kind) << ',' << r.retrieval_scored << ',' << r.gold_rank << ','
            << r.hit1 << ',' << r.hit3 << ',' << r.rr << ',' << r.answered << ',' << csv_field(r.gold_label) << ','
            << csv_field(r.prediction.value_or("")) << ',' << (r.answered && !r.prediction) << ',' << r.option_rr
            << ',' << csv_field(r.error) << '\n';
    }
}

std::string params_fingerprint(const EncoderParams& params) {
    const auto& c = params.config();
    std::ostringstream head;
    head << to_string(c.variant) << ' ' << c.layers << ' ' << c.embed_dim << ' ' << c.hidden_dim << ' ' << c.heads
         << ' ' << to_string(c.pos_map) << ' ' << to_string(c.hidden_activation) << ' '
         << to_string(c.output_activation) << '\n';
    std::string bytes = head.str();
    for (const auto& b : params.blocks()) {
        bytes += b.name;
        bytes.append(reinterpret_cast<const char*>(b.data), b.size * sizeof(double));
    }
    return sha256_hex(bytes);
}

namespace {

bool is_gold(const QAItem& item, GoldMatch mode, const ChunkId& id) {
    const bool chunks = mode == GoldMatch::Chunks || (mode == GoldMatch::Auto && !item.gold_chunks.empty());
    if (chunks) return std::find(item.gold_chunks.begin(), item.gold_chunks.end(), id.str()) != item.gold_chunks.end();
    return std::find(item.gold_docs.begin(), item.gold_docs.end(), id.doc) != item.gold_docs.end();
}

bool has_gold(const QAItem& item, GoldMatch mode) {
    switch (mode) {
        case GoldMatch::Chunks: return !item.gold_chunks.empty();
        case GoldMatch::Documents: return !item.gold_docs.empty();
        case GoldMatch::Auto: return item.has_retrieval_gold();
    }
    return false;
}

}  // namespace

EvalReport run_eval(std::span<const QAItem> dataset, const Retriever& retriever, LMClient* client,
                    const EvalConfig& cfg) {
    const auto& nodes = retriever.index().graph().nodes();
    auto evaluate = [&](const QAItem& item) {
        EvalRow row;
        row.qid = item.qid;
        row.kind = item.kind;
        row.gold_label = item_gold_label(item);
        try {
            item.validate();
            if (has_gold(item, cfg.gold)) {
                const auto ranking = rank_nodes(retriever.score(retriever.context(item.question)));
                for (std::size_t r = 0; r < ranking.size(); ++r) {
                    if (is_gold(item, cfg.gold, nodes[ranking[r]])) {
                        row.gold_rank = r + 1;
                        break;
                    }
                }
                row.retrieval_scored = true;
                row.hit1 = row.gold_rank == 1 ? 1 : 0;
                row.hit3 = row.gold_rank >= 1 && row.gold_rank <= 3 ? 1 : 0;
                row.rr = row.gold_rank ? 1.0 / static_cast<double>(row.gold_rank) : 0.0;
            }
            if (client) {
                const auto rec =
                    answer_pipeline(item.question, retriever, cfg.top_n, *client, item.kind, item.options, cfg.rag);
                row.answered = true;
                row.answer_text = rec.answer.text;
                row.prediction = rec.answer.label;
                if (item.kind == QuestionKind::MultipleChoice) {
                    std::vector<std::string> ranked;
                    if (row.prediction) ranked.push_back(*row.prediction);
                    for (std::size_t i = 0; i < item.options.size(); ++i) {
                        if (option_letter(i) != row.prediction) ranked.push_back(option_letter(i));
                    }
                    row.option_rr = mrr(ranked, row.gold_label).value;
                }
            }
        } catch (const Error& e) {
            row.error = e.what();
        }
        return row;
    };

    EvalReport report;
    report.rows.resize(dataset.size());
    std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(1, dataset.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < dataset.size(); ++i) report.rows[i] = evaluate(dataset[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next++; i < dataset.size(); i = next++) report.rows[i] = evaluate(dataset[i]);
            }));
        }
        for (auto& f : pool) f.get();
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const EvalRow& a, const EvalRow& b) { return a.qid < b.qid; });
    report.aggregates = aggregate(report.rows);

    const auto& prov = retriever.index().graph().provenance();
    report.fingerprint = {{"corpus_hash", prov.corpus_hash},
                          {"l", prov.chunk_length},
                          {"n", prov.top_n},
                          {"k1", prov.k1},
                          {"b", prov.b},
                          {"dense_provider_id", prov.dense_provider_id},
                          {"params_sha256", params_fingerprint(retriever.params())},
                          {"N", cfg.top_n},
                          {"gold_match", cfg.gold == GoldMatch::Chunks      ? "chunks"
                                         : cfg.gold == GoldMatch::Documents ? "documents"
                                                                            : "auto"}};
    return report;
}

}  // namespace cgrag
