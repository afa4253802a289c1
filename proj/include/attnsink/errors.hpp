#pragma once

#include <stdexcept>
#include <string>

namespace attnsink {

// Malformed or truncated ATSF input, bad magic, shape/normalization
// violations under strict reading. CLI exit code 1.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid classifier config, sink profile or command-line values.
// CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sentence-id sets of two corpora do not line up. CLI exit code 3.
class MismatchError : public std::runtime_error {
public:
    explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a slice has less than epsilon_mass attention left on content
// positions; renormalization would divide by (near) zero.
class ZeroContentMass : public std::runtime_error {
public:
    ZeroContentMass(const std::string& msg, double residual)
        : std::runtime_error(msg), residual_mass(residual) {}

    double residual_mass;
};

}  // namespace attnsink
