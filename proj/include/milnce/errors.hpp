#pragma once

#include <stdexcept>
#include <string>

namespace milnce {

/// Configuration or input parsing problem (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss or gradient; the run aborts rather than clipping
/// (CLI exit code 3).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Artifact (checkpoint/corpus file) version or format mismatch
/// (CLI exit code 5).
struct ArtifactError : std::runtime_error {
    explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace milnce
