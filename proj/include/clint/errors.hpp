#pragma once

#include <stdexcept>
#include <string>

namespace clint {

// Bad values fed to an operation (empty input, out-of-range id, ...).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent or unusable configuration (vocab too small, H % A != 0, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed records in a corpus or other data file.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken on-disk artifact (bad magic, truncated file, shape mismatch).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure inside an optimization loop, carries the offending tensor name.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace clint
