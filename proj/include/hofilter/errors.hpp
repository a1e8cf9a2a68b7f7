#pragma once

#include <stdexcept>
#include <string>

namespace hofilter {

// Input violates a documented precondition (dimension mismatch, bad config value, ...).
struct RejectedInput : std::invalid_argument {
    explicit RejectedInput(const std::string& what) : std::invalid_argument(what) {}
};

// Operation asks for something the object was not built to provide
// (e.g. operator order beyond the oracle's max_order).
struct CapabilityError : std::runtime_error {
    explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

// A numeric quantity left the finite range mid-computation; message names the step.
struct NumericBlowup : std::runtime_error {
    explicit NumericBlowup(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file content; carries the 1-based line number.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, long line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
    long line_number;
};

} // namespace hofilter
