// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/pipeline.hpp"

#include "popi/errors.hpp"
#include "popi/rng.hpp"

namespace popi {

TokenSeq infer_summary(const Policy& inf, const TokenSeq& signals, uint64_t seed) {
    return inf.sample(signals, seed, inf.arch().max_out);
}

TokenSeq infer_summary_prompt_dependent(const Policy& inf, const TokenSeq& signals,
                                        const TokenSeq& prompt, uint64_t seed) {
    return inf.sample(join_context(signals, prompt), seed, inf.arch().max_out);
}

TokenSeq personalized_generate(const Policy& gen, const TokenSeq& prompt, const TokenSeq& summary,
                               uint64_t seed) {
    return gen.sample(join_context(summary, prompt), seed, gen.arch().max_out);
}

const TokenSeq& SummaryCache::get(size_t user_index, const TokenSeq& signals) {
    auto it = cache_.find(user_index);
    if (it == cache_.end()) {
        ++calls_;
        it = cache_.emplace(user_index,
                            infer_summary(*inf_, signals, mix_seed(seed_, 0x7375, user_index)))
                 .first;
    }
    return it->second;
}

void SummaryCache::assert_single_calls() const {
    if (calls_ != cache_.size())
        throw InvariantViolationError("summary cache made " + std::to_string(calls_) +
                                      " inference calls for " + std::to_string(cache_.size()) +
                                      " users");
}

std::vector<Policy> make_offtheshelf_zoo(const Vocab& vocab, int context_window,
                                         int response_max_len, uint64_t seed) {
    struct Dims {
        int embed, hidden;
    };
    constexpr Dims dims[] = {{6, 12}, {8, 24}, {10, 20}};
    std::vector<Policy> zoo;
    zoo.reserve(3);
    for (int i = 0; i < 3; ++i) {
        PolicyArch arch;
        arch.embed_dim = dims[i].embed;
        arch.hidden_dim = dims[i].hidden;
        arch.context_window = context_window;
        arch.max_out = response_max_len;
        Policy p(vocab, arch, PolicyRole::off_the_shelf,
                 mix_seed(seed, 0x7a6f6f, static_cast<uint64_t>(i)));
        p.freeze();
        zoo.push_back(std::move(p));
    }
    return zoo;
}

}  // namespace popi
