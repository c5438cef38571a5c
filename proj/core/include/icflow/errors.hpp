#ifndef ICFLOW_ERRORS_HPP
#define ICFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace icflow {

// Shape / extent mismatches between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

// Argument outside its mathematical domain (sigma out of [0,1], empty softmax, ...).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain: " + msg) {}
};

// NaN/Inf produced by an op, or a degenerate (near-zero) embedding/anchor.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

}  // namespace icflow

#endif
