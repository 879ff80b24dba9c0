// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/token.hpp"

#include <sstream>

namespace popi {

void validate_seq(const Vocab& vocab, const TokenSeq& seq) {
    for (Token t : seq) {
        if (!vocab.contains(t))
            throw InvalidInputError("token id " + std::to_string(t) + " out of range for vocab " +
                                    std::to_string(vocab.size));
        if (t == kEos) throw InvalidInputError("EOS token must not appear inside a sequence");
    }
}

TokenSeq join_context(const TokenSeq& aux, const TokenSeq& prompt) {
    if (aux.empty()) return prompt;
    if (prompt.empty()) return aux;
    TokenSeq out;
    out.reserve(aux.size() + 1 + prompt.size());
    out.insert(out.end(), aux.begin(), aux.end());
    out.push_back(kSep);
    out.insert(out.end(), prompt.begin(), prompt.end());
    return out;
}

std::string to_string(const TokenSeq& seq) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < seq.size(); ++i) {
        if (i) os << ' ';
        os << seq[i];
    }
    os << ']';
    return os.str();
}

}  // namespace popi
