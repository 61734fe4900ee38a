#include "cgrag/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "cgrag/error.hpp"
#include "cgrag/text.hpp"

namespace cgrag {

using ojson = nlohmann::ordered_json;

SparseVector::SparseVector(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (const auto& e : entries) {
        if (!entries_.empty() && entries_.back().first == e.first) {
            entries_.back().second += e.second;
        } else {
            entries_.push_back(e);
        }
    }
    std::erase_if(entries_, [](const Entry& e) { return !(e.second > 0.0); });
}

double SparseVector::weight(TermId t) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), t,
                               [](const Entry& e, TermId v) { return e.first < v; });
    return (it != entries_.end() && it->first == t) ? it->second : 0.0;
}

double f_sparse(const SparseVector& a, const SparseVector& b) {
    const auto& x = a.entries();
    const auto& y = b.entries();
    double sum = 0.0;
    std::size_t i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i].first < y[j].first) {
            ++i;
        } else if (y[j].first < x[i].first) {
            ++j;
        } else {
            sum += x[i].second * y[j].second;
            ++i;
            ++j;
        }
    }
    return sum;
}

SparseIndex SparseIndex::fit(std::span<const Chunk> chunks, Bm25Params params) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(chunks.size());
    for (const auto& c : chunks) docs.push_back(c.tokens);
    return fit_tokens(docs, params);
}

SparseIndex SparseIndex::fit_tokens(std::span<const std::vector<std::string>> docs, Bm25Params params) {
    if (docs.empty()) throw InputError("cannot fit a sparse index on zero chunks");
    SparseIndex idx;
    idx.params_ = params;
    std::map<std::string, std::uint32_t, std::less<>> df;
    std::uint64_t total_len = 0;
    for (const auto& d : docs) {
        total_len += d.size();
        std::set<std::string_view> distinct(d.begin(), d.end());
        for (auto t : distinct) ++df[std::string(t)];
    }
    TermId next = 0;
    for (const auto& [term, count] : df) {
        idx.vocab_.emplace(term, next++);
        idx.doc_freq_.push_back(count);
    }
    idx.chunk_count_ = docs.size();
    idx.avg_len_ = static_cast<double>(total_len) / static_cast<double>(docs.size());
    return idx;
}

std::optional<TermId> SparseIndex::term_id(std::string_view term) const {
    auto it = vocab_.find(term);
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
}

double SparseIndex::idf(TermId t) const {
    const double n = static_cast<double>(chunk_count_);
    const double df = static_cast<double>(doc_freq_.at(t));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

SparseVector SparseIndex::encode_chunk(std::span<const std::string> tokens) const {
    std::map<TermId, std::uint32_t> tf;
    for (const auto& tok : tokens) {
        if (auto id = term_id(tok)) ++tf[*id];
    }
    const double len = static_cast<double>(tokens.size());
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avg_len_);
    std::vector<SparseVector::Entry> entries;
    entries.reserve(tf.size());
    for (const auto& [term, count] : tf) {
        const double f = count;
        entries.emplace_back(term, f * (params_.k1 + 1.0) / (f + norm));
    }
    return SparseVector(std::move(entries));
}

SparseVector SparseIndex::encode_query(std::string_view query_text) const {
    std::set<TermId> terms;
    for (const auto& tok : tokenize_words(query_text)) {
        if (auto id = term_id(tok)) terms.insert(*id);
    }
    std::vector<SparseVector::Entry> entries;
    for (TermId t : terms) entries.emplace_back(t, idf(t));
    return SparseVector(std::move(entries));
}

std::string SparseIndex::id() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "bm25(k1=" << params_.k1 << ",b=" << params_.b << ")";
    return ss.str();
}

bool SparseIndex::operator==(const SparseIndex& o) const {
    return vocab_ == o.vocab_ && doc_freq_ == o.doc_freq_ && avg_len_ == o.avg_len_ &&
           chunk_count_ == o.chunk_count_ && params_.k1 == o.params_.k1 && params_.b == o.params_.b;
}

void SparseIndex::save(const std::filesystem::path& path) const {
    ojson j;
    j["format_version"] = kFormatVersion;
    j["k1"] = params_.k1;
    j["b"] = params_.b;
    j["chunk_count"] = chunk_count_;
    j["avg_chunk_len"] = avg_len_;
    std::vector<std::string> terms(vocab_.size());
    for (const auto& [term, id] : vocab_) terms[id] = term;
    j["vocabulary"] = terms;
    j["doc_freq"] = doc_freq_;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write sparse index: " + path.string());
    out << j.dump() << '\n';
}

SparseIndex SparseIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read sparse index: " + path.string());
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const ojson::exception& e) {
        throw InputError("corrupt sparse index " + path.string() + ": " + e.what());
    }
    const int version = j.value("format_version", -1);
    if (version != kFormatVersion) {
        throw VersionError("sparse index " + path.string() + " has format_version " +
                           std::to_string(version) + ", expected " + std::to_string(kFormatVersion));
    }
    SparseIndex idx;
    try {
        idx.params_ = {j.at("k1").get<double>(), j.at("b").get<double>()};
        idx.chunk_count_ = j.at("chunk_count").get<std::uint64_t>();
        idx.avg_len_ = j.at("avg_chunk_len").get<double>();
        const auto terms = j.at("vocabulary").get<std::vector<std::string>>();
        idx.doc_freq_ = j.at("doc_freq").get<std::vector<std::uint32_t>>();
        if (terms.size() != idx.doc_freq_.size()) throw InputError("vocabulary/doc_freq size mismatch");
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (idx.doc_freq_[i] > idx.chunk_count_) throw InputError("doc_freq exceeds chunk_count");
            idx.vocab_.emplace(terms[i], static_cast<TermId>(i));
        }
    } catch (const ojson::exception& e) {
        throw InputError("corrupt sparse index " + path.string() + ": " + e.what());
    }
    return idx;
}

}  // namespace cgrag
