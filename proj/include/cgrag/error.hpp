#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgrag {

/// Base class for every domain failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (corpus, dataset, scripts).
class InputError : public Error {
public:
    using Error::Error;
};

/// Persisted artifact has an unsupported format_version.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Persisted artifact was built from different inputs than the ones supplied.
class ProvenanceError : public Error {
public:
    using Error::Error;
};

/// Failure talking to an external embedding or language-model service.
class ServiceError : public Error {
public:
    ServiceError(const std::string& what, std::optional<double> retry_after_s = std::nullopt,
                 int status = 0)
        : Error(what), retry_after_s_(retry_after_s), status_(status) {}

    [[nodiscard]] std::optional<double> retry_after() const noexcept { return retry_after_s_; }
    [[nodiscard]] int status() const noexcept { return status_; }

private:
    std::optional<double> retry_after_s_;
    int status_;
};

/// Numerical breakdown (NaN/Inf) inside the encoder or trainer.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Configuration validation failure; carries every offending field.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}

    [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string out = "invalid configuration:";
        for (const auto& s : p) out += "\n  " + s;
        return out;
    }
    std::vector<std::string> problems_;
};

}  // namespace cgrag
