#pragma once

#include <stdexcept>
#include <string>

namespace calad {

// Shape or size disagreement between tensor operands.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or combination.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files (CSV rows, label files). Carries file + line context.
struct IngestionError : std::runtime_error {
    explicit IngestionError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf where a finite value is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: preconditions violated by the caller.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct TrainingDivergedError : std::runtime_error {
    explicit TrainingDivergedError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline stage artifact expected on disk is missing.
struct ArtifactError : std::runtime_error {
    explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// Stored config hash does not match the active configuration.
struct CheckpointMismatchError : std::runtime_error {
    explicit CheckpointMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace calad
