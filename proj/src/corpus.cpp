#include "cgrag/corpus.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <unordered_set>

#include "cgrag/error.hpp"
#include "cgrag/hash.hpp"

namespace cgrag {

using nlohmann::json;

std::string ChunkId::str() const { return doc + "#" + std::to_string(ordinal); }

ChunkId ChunkId::parse(std::string_view s) {
    const auto pos = s.rfind('#');
    if (pos == std::string_view::npos || pos + 1 >= s.size()) {
        throw InputError("malformed chunk id: " + std::string(s));
    }
    ChunkId id;
    id.doc = std::string(s.substr(0, pos));
    try {
        std::size_t used = 0;
        const std::string num(s.substr(pos + 1));
        const unsigned long v = std::stoul(num, &used);
        if (used != num.size()) throw std::invalid_argument("trailing");
        id.ordinal = static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
        throw InputError("malformed chunk id: " + std::string(s));
    }
    return id;
}

Document make_document(std::string id, std::string title, std::string text,
                       std::vector<std::string> references, std::vector<TokenCrossRef> crossrefs) {
    Document d;
    d.id = std::move(id);
    d.title = std::move(title);
    d.text = std::move(text);
    d.tokens = tokenize(d.text);
    d.references = std::move(references);
    d.crossrefs = std::move(crossrefs);
    return d;
}

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (!by_id_.emplace(docs_[i].id, i).second) {
            throw InputError("duplicate doc_id \"" + docs_[i].id + "\"");
        }
    }
    for (const auto& d : docs_) {
        for (const auto& r : d.references) {
            if (!by_id_.contains(r)) {
                warnings_.push_back("document \"" + d.id + "\" references unknown doc_id \"" + r + "\"");
            }
        }
    }
}

const Document* Corpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::vector<std::pair<std::string, std::string>> Corpus::citations() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& d : docs_) {
        std::unordered_set<std::string> seen;
        for (const auto& r : d.references) {
            if (r == d.id || !by_id_.contains(r) || !seen.insert(r).second) continue;
            out.emplace_back(r, d.id);
        }
    }
    return out;
}

std::string Corpus::content_hash() const {
    json arr = json::array();
    for (const auto& d : docs_) {
        json xr = json::array();
        for (const auto& x : d.crossrefs) xr.push_back({x.from_token, x.to_token});
        arr.push_back({{"id", d.id}, {"title", d.title}, {"text", d.text},
                       {"references", d.references}, {"crossrefs", xr}});
    }
    return sha256_hex(arr.dump());
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read corpus file: " + path.string());
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError("malformed record at " + where + ": " + e.what());
        }
        try {
            if (!rec.is_object()) throw InputError("record is not an object");
            std::vector<std::string> refs;
            if (rec.contains("references")) refs = rec.at("references").get<std::vector<std::string>>();
            std::vector<TokenCrossRef> xrefs;
            if (rec.contains("crossrefs")) {
                for (const auto& p : rec.at("crossrefs")) {
                    xrefs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
                }
            }
            docs.push_back(make_document(rec.at("id").get<std::string>(),
                                         rec.value("title", std::string{}),
                                         rec.at("text").get<std::string>(), std::move(refs),
                                         std::move(xrefs)));
        } catch (const json::exception& e) {
            throw InputError("malformed record at " + where + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError("malformed record at " + where + ": " + e.what());
        }
    }
    return Corpus(std::move(docs));
}

std::vector<Chunk> chunk_document(const Document& doc, std::size_t l) {
    if (l == 0) throw InputError("chunk length must be >= 1");
    if (doc.tokens.empty()) throw InputError("document \"" + doc.id + "\" has an empty body");
    const std::size_t total = doc.tokens.size();
    const std::size_t count = (total + l - 1) / l;
    std::vector<Chunk> chunks;
    chunks.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t lo = c * l;
        const std::size_t hi = std::min(total, lo + l);
        Chunk ch;
        ch.id = {doc.id, static_cast<std::uint32_t>(c)};
        ch.tokens.reserve(hi - lo);
        for (std::size_t t = lo; t < hi; ++t) ch.tokens.push_back(doc.tokens[t].text);
        ch.char_begin = doc.tokens[lo].begin;
        ch.char_end = doc.tokens[hi - 1].end;
        ch.text = doc.text.substr(ch.char_begin, ch.char_end - ch.char_begin);
        chunks.push_back(std::move(ch));
    }
    return chunks;
}

ChunkSet chunk_corpus(const Corpus& corpus, std::size_t l) {
    ChunkSet out;
    for (const auto& d : corpus.documents()) {
        if (d.tokens.empty()) {
            out.warnings.push_back("skipping document \"" + d.id + "\": empty body");
            continue;
        }
        auto cs = chunk_document(d, l);
        std::move(cs.begin(), cs.end(), std::back_inserter(out.chunks));
    }
    return out;
}

}  // namespace cgrag
