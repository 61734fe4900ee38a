#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cgrag {

/// Fixed-dimension real embedding.
class DenseVector {
public:
    DenseVector() = default;
    explicit DenseVector(std::size_t dim) : values_(dim, 0.0) {}
    explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}
    DenseVector(std::initializer_list<double> values) : values_(values) {}

    [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] const double* data() const noexcept { return values_.data(); }
    [[nodiscard]] double* data() noexcept { return values_.data(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    [[nodiscard]] bool all_finite() const noexcept;

    bool operator==(const DenseVector&) const = default;

private:
    std::vector<double> values_;
};

/// Dot product with pairwise summation. Throws InputError on dimension mismatch.
double f_dense(const DenseVector& a, const DenseVector& b);
double dot_pairwise(std::span<const double> a, std::span<const double> b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    /// Throws InputError for empty text, ServiceError for transport problems.
    [[nodiscard]] virtual DenseVector embed(const std::string& text) const = 0;
    /// Order preserving; fails as a whole if any element fails.
    [[nodiscard]] virtual std::vector<DenseVector> embed_batch(std::span<const std::string> texts) const;

    [[nodiscard]] virtual std::size_t dimension() const noexcept = 0;
    [[nodiscard]] virtual bool normalized() const noexcept = 0;
    /// Stable identifier used for cache provenance.
    [[nodiscard]] virtual std::string id() const = 0;
};

/// Offline provider: signed feature hashing of normalized unigrams into `dim`
/// buckets, then a seeded +-1/sqrt(dim) random projection. Texts that share
/// words get correlated vectors.
class HashingEmbedder final : public EmbeddingProvider {
public:
    HashingEmbedder(std::size_t dim, std::uint64_t seed, bool normalize = false);

    [[nodiscard]] DenseVector embed(const std::string& text) const override;
    [[nodiscard]] std::size_t dimension() const noexcept override { return dim_; }
    [[nodiscard]] bool normalized() const noexcept override { return normalize_; }
    [[nodiscard]] std::string id() const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
    bool normalize_;
    std::vector<double> projection_;  // dim x dim, row major
};

struct RemoteEmbedderConfig {
    std::string url;  ///< full endpoint, e.g. http://host:8080/v1/embeddings
    std::string model;
    std::string api_key;
    std::size_t dimension = 384;
    bool normalize = false;
    std::size_t max_in_flight = 4;
    std::size_t batch_size = 32;
    double timeout_s = 30.0;
};

/// Speaks {"model","input":[...]} -> {"data":[{"index","embedding"}]}.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    explicit RemoteEmbedder(RemoteEmbedderConfig cfg);
    ~RemoteEmbedder() override;

    [[nodiscard]] DenseVector embed(const std::string& text) const override;
    [[nodiscard]] std::vector<DenseVector> embed_batch(std::span<const std::string> texts) const override;
    [[nodiscard]] std::size_t dimension() const noexcept override { return cfg_.dimension; }
    [[nodiscard]] bool normalized() const noexcept override { return cfg_.normalize; }
    [[nodiscard]] std::string id() const override;

private:
    std::vector<DenseVector> request(std::span<const std::string> texts, std::size_t offset) const;

    RemoteEmbedderConfig cfg_;
    struct Limiter;
    std::unique_ptr<Limiter> limiter_;
};

/// Memoizes another provider on disk, keyed by (provider id, SHA-256 of text).
class CachingEmbedder final : public EmbeddingProvider {
public:
    CachingEmbedder(std::shared_ptr<const EmbeddingProvider> inner, std::filesystem::path cache_file);

    [[nodiscard]] DenseVector embed(const std::string& text) const override;
    [[nodiscard]] std::vector<DenseVector> embed_batch(std::span<const std::string> texts) const override;
    [[nodiscard]] std::size_t dimension() const noexcept override { return inner_->dimension(); }
    [[nodiscard]] bool normalized() const noexcept override { return inner_->normalized(); }
    [[nodiscard]] std::string id() const override { return inner_->id(); }

    /// Write the cache file. Called automatically on destruction.
    void flush() const;
    [[nodiscard]] std::size_t hits() const noexcept { return hits_; }
    ~CachingEmbedder() override;

private:
    std::shared_ptr<const EmbeddingProvider> inner_;
    std::filesystem::path path_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, std::vector<double>> cache_;
    mutable bool dirty_ = false;
    mutable std::size_t hits_ = 0;
};

/// Scale to unit Euclidean norm; zero vectors are left unchanged.
void normalize_in_place(DenseVector& v);

}  // namespace cgrag
