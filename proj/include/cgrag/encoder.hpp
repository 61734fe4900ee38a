#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgrag {

enum class EncoderVariant : std::uint8_t { MeanLinear, Attention };
enum class Activation : std::uint8_t { Identity, Tanh };
/// Maps raw sparse scores into the non-negative domain before gating.
enum class PositivityMap : std::uint8_t { Floor, Softplus };

std::string_view to_string(EncoderVariant v);
std::string_view to_string(Activation a);
std::string_view to_string(PositivityMap p);
EncoderVariant parse_variant(std::string_view s);
Activation parse_activation(std::string_view s);
PositivityMap parse_pos_map(std::string_view s);

/// max(x, 0) or softplus(x).
double apply_pos_map(PositivityMap m, double x);

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::MeanLinear;
    std::size_t layers = 2;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 128;
    std::size_t heads = 4;
    Activation hidden_activation = Activation::Tanh;
    Activation output_activation = Activation::Identity;
    PositivityMap pos_map = PositivityMap::Floor;
    std::uint64_t seed = 0;

    /// Input/output width of layer k. The last layer maps back to embed_dim.
    [[nodiscard]] std::size_t in_dim(std::size_t k) const { return k == 0 ? embed_dim : hidden_dim; }
    [[nodiscard]] std::size_t out_dim(std::size_t k) const { return k + 1 == layers ? embed_dim : hidden_dim; }
    [[nodiscard]] Activation activation(std::size_t k) const {
        return k + 1 == layers ? output_activation : hidden_activation;
    }
    /// Throws ConfigError listing every inconsistency.
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

/// One message-passing layer. The mean-linear variant uses `w`; the
/// attention variant uses `wq`, `wk`, `wv`. `bias` is added after aggregation.
struct EncoderLayer {
    Eigen::MatrixXd w;
    Eigen::MatrixXd wq;
    Eigen::MatrixXd wk;
    Eigen::MatrixXd wv;
    Eigen::VectorXd bias;
};

/// Edge relevance head: sigmoid(w2 . tanh(w1 x + b1) + b2), x = c_i - c_j.
struct AlphaHead {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::VectorXd w2;
    Eigen::VectorXd b2;  ///< size 1
};

/// Named view over one contiguous parameter array.
struct ParamBlock {
    std::string name;
    double* data;
    std::size_t size;
};

struct ConstParamBlock {
    std::string name;
    const double* data;
    std::size_t size;
};

/// Graph encoder weights plus the edge relevance head.
class EncoderParams {
public:
    static constexpr int kFormatVersion = 1;

    EncoderParams() = default;

    /// Seeded Glorot-uniform init of every weight, zero biases.
    static EncoderParams init(const EncoderConfig& cfg);
    /// All-zero parameters of the right shapes (also used for gradients).
    static EncoderParams zeros(const EncoderConfig& cfg);
    /// Single mean-linear layer with identity weights and no nonlinearity:
    /// the configuration under which scoring reduces to sparse x dense fusion.
    static EncoderParams identity(std::size_t embed_dim, PositivityMap pos_map = PositivityMap::Floor);
    /// identity() with a seeded Glorot-uniform edge relevance head: a training
    /// start that scores like fusion on isolated nodes.
    static EncoderParams fusion_start(std::size_t embed_dim, PositivityMap pos_map, std::uint64_t seed);

    [[nodiscard]] const EncoderConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const std::vector<EncoderLayer>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::vector<EncoderLayer>& layers() noexcept { return layers_; }
    [[nodiscard]] const AlphaHead& alpha_head() const noexcept { return head_; }
    [[nodiscard]] AlphaHead& alpha_head() noexcept { return head_; }

    /// Parameter arrays in a fixed order (checkpoint and optimizer layout).
    [[nodiscard]] std::vector<ParamBlock> blocks();
    [[nodiscard]] std::vector<ConstParamBlock> blocks() const;
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] bool all_finite() const;

    void save(const std::filesystem::path& path) const;
    static EncoderParams load(const std::filesystem::path& path);

    bool operator==(const EncoderParams& o) const;

private:
    EncoderConfig cfg_;
    std::vector<EncoderLayer> layers_;
    AlphaHead head_;
};

/// Message-passing problem: in-neighbor lists, initial states and gates.
struct MessageGraph {
    std::vector<std::vector<std::uint32_t>> in;  ///< distinct sources per node
    std::vector<Eigen::VectorXd> x;              ///< h^(0), one per node
    std::vector<double> delta;                   ///< query relevance per node

    [[nodiscard]] std::size_t size() const noexcept { return in.size(); }
};

/// alpha[i][p] belongs to the edge in[i][p] -> i.
using AlphaTable = std::vector<std::vector<double>>;

double alpha_head_forward(const AlphaHead& head, const Eigen::VectorXd& diff);
AlphaTable compute_alpha_table(const AlphaHead& head, const MessageGraph& g);

/// Intermediates kept for the backward pass.
struct ForwardTape {
    std::vector<std::vector<Eigen::VectorXd>> h;    ///< h[k][i], k = 0..K
    std::vector<std::vector<Eigen::VectorXd>> z;    ///< mean-linear: aggregated input per layer
    std::vector<std::vector<Eigen::VectorXd>> q;    ///< attention: Wq h
    std::vector<std::vector<Eigen::VectorXd>> kh;   ///< attention: Wk h
    std::vector<std::vector<Eigen::VectorXd>> vh;   ///< attention: Wv h
    std::vector<std::vector<Eigen::MatrixXd>> att;  ///< attention weights [k][i] (heads x |S_i|)

    [[nodiscard]] const std::vector<Eigen::VectorXd>& output() const { return h.back(); }
};

/// Run K layers of gated message passing. Each node aggregates its own
/// message (gate delta_i) and one from each in-neighbor (gate delta_j * alpha_ij).
/// Throws NumericError naming the layer and node on a non-finite state.
ForwardTape encoder_forward(const EncoderParams& params, const MessageGraph& g, const AlphaTable& alpha,
                            bool keep_tape = true);

/// Reverse pass. `d_out[i]` is dLoss/dH_i (empty vector = zero). Accumulates
/// into `grad` and returns dLoss/dalpha in the layout of `alpha`.
AlphaTable encoder_backward(const EncoderParams& params, const MessageGraph& g, const AlphaTable& alpha,
                            const ForwardTape& tape, std::span<const Eigen::VectorXd> d_out,
                            EncoderParams& grad);

/// Accumulates the alpha-head gradient for every edge given dLoss/dalpha.
void alpha_head_backward(const AlphaHead& head, const MessageGraph& g, const AlphaTable& d_alpha,
                         AlphaHead& grad);

}  // namespace cgrag
