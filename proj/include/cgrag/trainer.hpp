#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cgrag/encoder.hpp"
#include "cgrag/retrieval.hpp"

namespace cgrag {

struct TrainExample {
    std::string query;
    std::uint32_t gold = 0;                ///< graph node index
    std::vector<std::uint32_t> negatives;  ///< graph node indices
};

/// Sampled-softmax cross entropy over {gold} + negatives. Scores are computed
/// exactly as in full-graph retrieval, on the K-hop receptive field of the
/// candidates only.
class CandidateObjective {
public:
    CandidateObjective(const RetrievalIndex& index, const SparseEncoder& sparse, const EmbeddingProvider& dense);

    /// Throws InputError for fewer than two candidates, a gold among the
    /// negatives, duplicates, or unknown node ids.
    [[nodiscard]] double loss(const EncoderParams& params, const TrainExample& ex) const;

    struct LossAndGrad {
        double loss = 0.0;
        EncoderParams grad;
        std::vector<double> scores;  ///< candidate scores, gold first
    };
    /// Loss and exact gradient w.r.t. every encoder and alpha-head parameter.
    /// Throws NumericError naming the parameter block if a gradient is non-finite.
    [[nodiscard]] LossAndGrad loss_and_grad(const EncoderParams& params, const TrainExample& ex) const;

    /// Candidate scores (gold first), identical to the full-graph scores.
    [[nodiscard]] std::vector<double> candidate_scores(const EncoderParams& params, const TrainExample& ex) const;

private:
    struct Local;
    [[nodiscard]] Local localize(const EncoderParams& params, const TrainExample& ex) const;

    const RetrievalIndex& index_;
    const SparseEncoder& sparse_;
    const EmbeddingProvider& dense_;
};

/// -log softmax(scores)[gold], computed stably.
double softmax_cross_entropy(std::span<const double> scores, std::size_t gold);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    AdamWConfig cfg;

    static OptimizerState for_params(const EncoderParams& params, AdamWConfig cfg);
};

/// One bias-corrected adaptive-moment update with decoupled weight decay:
/// theta <- theta * (1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps).
void adamw_step(EncoderParams& params, OptimizerState& state, const EncoderParams& grad);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t negatives = 15;
    std::uint64_t seed = 0;
    AdamWConfig optimizer;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double val_hit1 = 0.0;
};

struct TrainResult {
    EncoderParams best;
    EncoderParams last;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

/// Labeled query for training: the gold node plus its text.
struct LabeledQuery {
    std::string query;
    std::uint32_t gold = 0;
};

/// Draw `count` distinct negatives uniformly from all nodes except gold.
std::vector<std::uint32_t> sample_negatives(std::size_t node_count, std::uint32_t gold, std::size_t count,
                                            std::uint64_t seed);

/// Hit@1 of full-graph retrieval on the given queries.
double hit_at_1(const Retriever& retriever, std::span<const LabeledQuery> queries);

/// Trains with per-example AdamW steps. Data order and negatives are reseeded
/// each epoch from (seed, epoch). When `validation` is empty the training
/// queries are used for model selection. Throws InputError without examples.
TrainResult train(EncoderParams params, const RetrievalIndex& index, const SparseEncoder& sparse,
                  const EmbeddingProvider& dense, std::span<const LabeledQuery> train_set,
                  std::span<const LabeledQuery> validation, const TrainConfig& cfg);

/// CSV "epoch,mean_loss,val_hit1".
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace cgrag
