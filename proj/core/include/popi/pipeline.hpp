// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "popi/policy.hpp"
#include "popi/token.hpp"

namespace popi {

/// Draws a preference summary from the inference policy given raw signals.
TokenSeq infer_summary(const Policy& inf, const TokenSeq& signals, uint64_t seed);

/// Prompt-dependent variant: conditions on signals ++ SEP ++ prompt. With an
/// empty prompt this is exactly infer_summary.
TokenSeq infer_summary_prompt_dependent(const Policy& inf, const TokenSeq& signals,
                                        const TokenSeq& prompt, uint64_t seed);

/// Samples a response conditioned on summary ++ SEP ++ prompt. An empty
/// summary degenerates to plain prompt conditioning, and frozen generators
/// work unchanged: nothing here needs gradient access.
TokenSeq personalized_generate(const Policy& gen, const TokenSeq& prompt, const TokenSeq& summary,
                               uint64_t seed);

/// Per-user summary cache for evaluation passes. Prompt-independent summaries
/// are computed once per user and reused across prompts; assert_single_calls
/// verifies no user cost more than one inference call.
class SummaryCache {
  public:
    SummaryCache(const Policy& inf, uint64_t seed) : inf_(&inf), seed_(seed) {}

    const TokenSeq& get(size_t user_index, const TokenSeq& signals);

    size_t inference_calls() const { return calls_; }
    size_t users_seen() const { return cache_.size(); }
    void assert_single_calls() const;

  private:
    const Policy* inf_;
    uint64_t seed_;
    size_t calls_ = 0;
    std::map<size_t, TokenSeq> cache_;
};

/// Three frozen generators with differing widths and seeds, standing in for
/// external models that summaries must steer without parameter access.
std::vector<Policy> make_offtheshelf_zoo(const Vocab& vocab, int context_window,
                                         int response_max_len, uint64_t seed);

}  // namespace popi
