// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "popi/errors.hpp"

namespace popi {

using Token = int;

/// A token sequence stores content tokens only; the terminating end-of-sequence
/// step is implicit. Token 0 is reserved for EOS and never appears inside a
/// sequence; token 1 is the reserved separator used when contexts are joined.
using TokenSeq = std::vector<Token>;

inline constexpr Token kEos = 0;
inline constexpr Token kSep = 1;

struct Vocab {
    int size = 2;  // includes the reserved EOS token at id 0

    Vocab() = default;
    explicit Vocab(int n) : size(n) {
        if (n < 2) throw InvalidInputError("vocab size must be >= 2");
    }

    bool contains(Token t) const { return t >= 0 && t < size; }
    /// First id usable as plain content (past EOS and the separator).
    int first_content() const { return size > 2 ? 2 : 1; }
    int num_content() const { return size - first_content(); }
};

/// Rejects out-of-range ids and embedded EOS.
void validate_seq(const Vocab& vocab, const TokenSeq& seq);

/// Joins an auxiliary context (signals or summary) with a prompt:
/// aux ++ [SEP] ++ prompt. Either side empty degenerates to the other,
/// so an empty summary reduces to plain prompt conditioning.
TokenSeq join_context(const TokenSeq& aux, const TokenSeq& prompt);

std::string to_string(const TokenSeq& seq);

}  // namespace popi
