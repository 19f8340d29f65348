#pragma once

#include <stdexcept>
#include <string>

namespace tailnet {

/// Invalid configuration: bad shapes, out-of-range hyperparameters, malformed specs.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// API misuse: e.g. backward called before forward.
class StateError : public std::logic_error {
public:
    explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// Numerically unusable input, e.g. a near-zero row fed to L2 normalization.
class DegenerateInputError : public std::runtime_error {
public:
    explicit DegenerateInputError(const std::string& what) : std::runtime_error(what) {}
};

/// A batch that violates a loss precondition (e.g. an anchor with no positives).
class BatchCompositionError : public std::runtime_error {
public:
    explicit BatchCompositionError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed external data (unexpected record layout, bad label byte, truncation).
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

/// Checkpoint file cannot be read back (version mismatch, truncation, corruption).
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

/// Training stopped because a loss or gradient went non-finite.
class TrainingAborted : public std::runtime_error {
public:
    explicit TrainingAborted(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tailnet
