#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cgrag/encoder.hpp"
#include "cgrag/trainer.hpp"

namespace cgrag {

/// Every setting a command can use. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path cache_dir = "cgrag-cache";
    std::size_t chunk_length = 512;
    std::size_t top_n_context = 4;
    std::size_t top_n_results = 5;
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;
    PositivityMap pos_map = PositivityMap::Floor;

    std::string dense_provider = "hash";  ///< hash | remote
    std::size_t dense_dim = 384;
    bool dense_normalize = false;
    std::string dense_url;
    std::string dense_model;
    std::string dense_api_key;
    std::size_t dense_batch_size = 32;
    std::size_t dense_max_in_flight = 4;

    EncoderVariant encoder_variant = EncoderVariant::MeanLinear;
    std::size_t encoder_layers = 2;
    std::size_t encoder_hidden_dim = 128;
    std::size_t encoder_heads = 4;
    std::string encoder_init = "random";  ///< random | fusion

    /// Starting parameters for training.
    [[nodiscard]] EncoderParams initial_params() const;

    std::filesystem::path train_dataset;
    double label_fraction = 0.1;
    std::size_t epochs = 20;
    std::size_t negatives = 15;
    double lr = 1e-3;
    double weight_decay = 0.01;

    std::string lm_provider = "none";  ///< none | remote | mock
    std::string lm_url;
    std::string lm_model;
    std::string lm_api_key;
    std::filesystem::path lm_script;
    std::size_t lm_max_in_flight = 4;
    std::size_t summary_words = 200;

    std::uint64_t seed = 0;

    [[nodiscard]] EncoderConfig encoder() const;
    [[nodiscard]] TrainConfig training() const;
    /// Effective configuration with API keys redacted.
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Parses "key = value" lines; lines starting with '#' are comments. "${NAME}" inside a value
/// is replaced from `env`. Collects every problem (unknown keys, duplicates,
/// bad values, unset variables, violated constraints) into one ConfigError.
RunConfig parse_config(std::string_view text, const EnvLookup& env,
                       const std::filesystem::path& base_dir = {});

/// Reads a file and parses it with the process environment.
RunConfig load_config(const std::filesystem::path& path);

/// Lookup backed by std::getenv.
std::optional<std::string> process_env(const std::string& name);

}  // namespace cgrag
