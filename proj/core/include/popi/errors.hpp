// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace popi {

/// Bad arguments: out-of-range token ids, empty user lists, inconsistent configs.
struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Attempted parameter update on a frozen policy.
struct FrozenPolicyError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Requested exhaustive enumeration would exceed the configured cap.
struct EnumerationTooLargeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Config file problems. `line` is 0 when no source line applies.
struct ConfigError : std::runtime_error {
    int line;
    explicit ConfigError(const std::string& msg, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
};

/// A declared invariant failed at runtime (CLI exit code 3).
struct InvariantViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace popi
