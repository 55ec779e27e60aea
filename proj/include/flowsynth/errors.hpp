#pragma once

#include <stdexcept>
#include <string>

namespace flowsynth {

// Error taxonomy. Tensor/shape violations, bad configs, numeric blow-ups and
// contract misuse are distinct failure classes so callers (and the CLI exit
// codes) can tell them apart.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct AlignmentError : std::runtime_error {
    explicit AlignmentError(const std::string& msg) : std::runtime_error("alignment error: " + msg) {}
};

struct StatsError : std::runtime_error {
    explicit StatsError(const std::string& msg) : std::runtime_error("stats error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

} // namespace flowsynth
