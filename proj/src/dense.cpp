#include "cgrag/dense.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <semaphore>

#include "cgrag/error.hpp"
#include "cgrag/hash.hpp"
#include "cgrag/text.hpp"
#include "http.hpp"

namespace cgrag {

using nlohmann::json;

bool DenseVector::all_finite() const noexcept {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double dot_pairwise(std::span<const double> a, std::span<const double> b) {
    constexpr std::size_t kLeaf = 8;
    if (a.size() <= kLeaf) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
    const std::size_t half = a.size() / 2;
    return dot_pairwise(a.first(half), b.first(half)) + dot_pairwise(a.subspan(half), b.subspan(half));
}

double f_dense(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) {
        throw InputError("dense dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
    }
    return dot_pairwise(a.values(), b.values());
}

void normalize_in_place(DenseVector& v) {
    const double n = std::sqrt(dot_pairwise(v.values(), v.values()));
    if (n > 0.0) {
        for (auto& x : v.values()) x /= n;
    }
}

std::vector<DenseVector> EmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
    std::vector<DenseVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        try {
            out.push_back(embed(texts[i]));
        } catch (const ServiceError& e) {
            throw ServiceError("batch element " + std::to_string(i) + ": " + e.what(), e.retry_after(),
                               e.status());
        } catch (const InputError& e) {
            throw InputError("batch element " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

// -- HashingEmbedder ---------------------------------------------------------

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed, bool normalize)
    : dim_(dim), seed_(seed), normalize_(normalize) {
    if (dim == 0) throw InputError("embedding dimension must be >= 1");
    std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    projection_.resize(dim * dim);
    std::uint64_t bits = 0;
    int left = 0;
    for (auto& p : projection_) {
        if (left == 0) {
            bits = rng();
            left = 64;
        }
        p = (bits & 1U) ? scale : -scale;
        bits >>= 1U;
        --left;
    }
}

DenseVector HashingEmbedder::embed(const std::string& text) const {
    const auto words = tokenize_words(text);
    if (words.empty()) throw InputError("cannot embed empty text");
    std::vector<double> buckets(dim_, 0.0);
    for (const auto& w : words) {
        const std::uint64_t h = fnv1a64(w, seed_);
        buckets[h % dim_] += (h >> 63U) ? -1.0 : 1.0;
    }
    DenseVector v(dim_);
    for (std::size_t r = 0; r < dim_; ++r) {
        v[r] = dot_pairwise(std::span<const double>(projection_).subspan(r * dim_, dim_), buckets);
    }
    if (normalize_) normalize_in_place(v);
    return v;
}

std::string HashingEmbedder::id() const {
    return "hash(d=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_) +
           ",norm=" + (normalize_ ? "1" : "0") + ")";
}

// -- RemoteEmbedder ----------------------------------------------------------

struct RemoteEmbedder::Limiter {
    explicit Limiter(std::ptrdiff_t n) : sem(n) {}
    std::counting_semaphore<1024> sem;
};

namespace {
struct Permit {
    explicit Permit(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
    ~Permit() { sem.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    std::counting_semaphore<1024>& sem;
};
}  // namespace

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.max_in_flight == 0 || cfg_.max_in_flight > 1024) {
        throw InputError("max_in_flight must be in [1, 1024]");
    }
    if (cfg_.batch_size == 0) throw InputError("batch_size must be >= 1");
    detail::parse_url(cfg_.url);
    limiter_ = std::make_unique<Limiter>(static_cast<std::ptrdiff_t>(cfg_.max_in_flight));
}

RemoteEmbedder::~RemoteEmbedder() = default;

std::string RemoteEmbedder::id() const {
    return "remote(" + cfg_.url + "," + cfg_.model + ",d=" + std::to_string(cfg_.dimension) +
           ",norm=" + (cfg_.normalize ? "1" : "0") + ")";
}

std::vector<DenseVector> RemoteEmbedder::request(std::span<const std::string> texts,
                                                 std::size_t offset) const {
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) throw InputError("batch element " + std::to_string(offset + i) + ": empty text");
    }
    json body = {{"model", cfg_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    json reply;
    {
        Permit permit(limiter_->sem);
        try {
            reply = detail::post_json(cfg_.url, cfg_.api_key, body, cfg_.timeout_s);
        } catch (const ServiceError& e) {
            throw ServiceError("batch starting at element " + std::to_string(offset) + ": " + e.what(),
                               e.retry_after(), e.status());
        }
    }
    std::vector<DenseVector> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    try {
        for (const auto& item : reply.at("data")) {
            const auto idx = item.at("index").get<std::size_t>();
            if (idx >= texts.size()) {
                throw ServiceError("response index " + std::to_string(idx) + " out of range");
            }
            auto values = item.at("embedding").get<std::vector<double>>();
            if (values.size() != cfg_.dimension) {
                throw ServiceError("dimension mismatch at element " + std::to_string(offset + idx) + ": got " +
                                   std::to_string(values.size()) + ", expected " +
                                   std::to_string(cfg_.dimension));
            }
            DenseVector v(std::move(values));
            if (!v.all_finite()) {
                throw ServiceError("non-finite embedding at element " + std::to_string(offset + idx));
            }
            if (cfg_.normalize) normalize_in_place(v);
            out[idx] = std::move(v);
            filled[idx] = true;
        }
    } catch (const json::exception& e) {
        throw ServiceError(std::string("malformed embedding response: ") + e.what());
    }
    for (std::size_t i = 0; i < filled.size(); ++i) {
        if (!filled[i]) throw ServiceError("missing embedding for element " + std::to_string(offset + i));
    }
    return out;
}

DenseVector RemoteEmbedder::embed(const std::string& text) const {
    if (text.empty()) throw InputError("cannot embed empty text");
    return std::move(request(std::span<const std::string>(&text, 1), 0).front());
}

std::vector<DenseVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<DenseVector> out;
    out.reserve(texts.size());
    for (std::size_t off = 0; off < texts.size(); off += cfg_.batch_size) {
        const auto n = std::min(cfg_.batch_size, texts.size() - off);
        auto part = request(texts.subspan(off, n), off);
        std::move(part.begin(), part.end(), std::back_inserter(out));
    }
    return out;
}

// -- CachingEmbedder ---------------------------------------------------------

CachingEmbedder::CachingEmbedder(std::shared_ptr<const EmbeddingProvider> inner,
                                 std::filesystem::path cache_file)
    : inner_(std::move(inner)), path_(std::move(cache_file)) {
    std::ifstream in(path_);
    if (!in) return;
    try {
        const json j = json::parse(in);
        if (j.value("provider", std::string{}) != inner_->id()) return;
        for (const auto& [key, values] : j.at("entries").items()) {
            cache_.emplace(key, values.get<std::vector<double>>());
        }
    } catch (const json::exception&) {
        cache_.clear();
    }
}

CachingEmbedder::~CachingEmbedder() {
    try {
        flush();
    } catch (...) {
    }
}

void CachingEmbedder::flush() const {
    std::lock_guard lock(mu_);
    if (!dirty_) return;
    json entries = json::object();
    for (const auto& [k, v] : cache_) entries[k] = v;
    std::ofstream out(path_);
    if (!out) throw Error("cannot write embedding cache: " + path_.string());
    out << json{{"provider", inner_->id()}, {"entries", entries}}.dump() << '\n';
    dirty_ = false;
}

DenseVector CachingEmbedder::embed(const std::string& text) const {
    const auto key = sha256_hex(text);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++hits_;
            return DenseVector(it->second);
        }
    }
    auto v = inner_->embed(text);
    std::lock_guard lock(mu_);
    cache_[key] = std::vector<double>(v.values().begin(), v.values().end());
    dirty_ = true;
    return v;
}

std::vector<DenseVector> CachingEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<DenseVector> out(texts.size());
    std::vector<std::string> missing;
    std::vector<std::size_t> missing_at;
    {
        std::lock_guard lock(mu_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (auto it = cache_.find(sha256_hex(texts[i])); it != cache_.end()) {
                out[i] = DenseVector(it->second);
                ++hits_;
            } else {
                missing.push_back(texts[i]);
                missing_at.push_back(i);
            }
        }
    }
    if (missing.empty()) return out;
    auto fresh = inner_->embed_batch(missing);
    std::lock_guard lock(mu_);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
        cache_[sha256_hex(missing[k])] = std::vector<double>(fresh[k].values().begin(), fresh[k].values().end());
        out[missing_at[k]] = std::move(fresh[k]);
    }
    dirty_ = true;
    return out;
}

}  // namespace cgrag
