// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "popi/pipeline.hpp"
#include "popi/policy.hpp"
#include "popi/synthworld.hpp"

namespace popi {

enum class EvalMode {
    base_model,
    raw_prompting,
    inference_prompting,
    popi_plug_and_play,
    raw_aligned,
    inference_aligned,
    popi_full,
};

std::string to_string(EvalMode mode);
constexpr int kNumEvalModes = 7;

/// What gets prepended ahead of the prompt for a given method.
struct AuxSource {
    enum class Kind { none, raw_signals, summary } kind = Kind::none;
    SummaryCache* cache = nullptr;  // required for Kind::summary
};

struct ModeMetrics {
    std::string mode;
    double avg_context_len = 0.0;
    double reward_accuracy = 0.0;
    double win_rate = 0.0;
    std::vector<double> per_user_accuracy;
    std::vector<double> per_user_win;
};

struct EvalConfig {
    int samples_per_prompt = 1;
    uint64_t seed = 0;
};

/// Fraction of held-out pairs where the method's chosen-vs-rejected
/// log-probability margin beats the base model's margin on the bare prompt.
/// Ties within 1e-12 score 0.5, so base-vs-base reads exactly 0.50.
double reward_accuracy(const Policy& method_gen, const Policy& base, const Policy* inf,
                       std::span<const UserRecord> users, uint64_t seed);

/// Responses produced per (user index, prompt, sample seed) when judging win
/// rates. Exposed so probes can bypass policy sampling.
using ResponseSampler = std::function<TokenSeq(size_t user_idx, const TokenSeq& prompt,
                                               uint64_t seed)>;

/// Head-to-head win rate judged by ground-truth persona utility: for each
/// held-out prompt the method and base each produce a response; strictly
/// higher utility wins, equal utility splits the point.
double win_rate_oracle(const Policy& method_gen, const Policy& base, const Policy* inf,
                       std::span<const UserRecord> users, const WorldConfig& wcfg,
                       int samples_per_prompt, uint64_t seed);

double win_rate_oracle_fn(const ResponseSampler& method, const ResponseSampler& base,
                          std::span<const UserRecord> users, const WorldConfig& wcfg,
                          int samples_per_prompt, uint64_t seed);

/// Mean context overhead in tokens: summary length, raw signal length, or 0.
double avg_context_len(AuxSource aux, std::span<const UserRecord> users);

/// All metrics for one method (generator + context source) against a base.
ModeMetrics eval_mode(const std::string& label, const Policy& method_gen, const Policy& base,
                      AuxSource aux, std::span<const UserRecord> users, const WorldConfig& wcfg,
                      const EvalConfig& cfg);

/// The trained/untrained policies the seven comparison modes draw from.
struct EvalPolicies {
    Policy gen_ref;   // frozen base generator
    Policy inf_ref;   // frozen unoptimized inference policy
    Policy inf_opt;   // frozen stage-1 inference policy
    Policy gen_popi;  // stage-2 generator trained on optimized summaries
    Policy gen_raw;   // generator aligned with raw signals as context
    Policy gen_inf;   // generator aligned with unoptimized summaries
    std::vector<Policy> zoo;
};

/// One row per mode, in the canonical order. Deterministic under `cfg.seed`;
/// never mutates any policy.
std::vector<ModeMetrics> run_matrix(const World& world, const EvalPolicies& policies,
                                    const EvalConfig& cfg);

/// Plug-and-play transfer: optimized summaries applied to each frozen zoo
/// generator, scored against that generator's own base margins.
std::vector<ModeMetrics> transfer_matrix(const World& world, std::span<const Policy> zoo,
                                         const Policy& inf_opt, const EvalConfig& cfg);

/// Aligned plain-text table with Avg. Len. / Acc. / Win Rate columns.
std::string format_metrics_table(std::span<const ModeMetrics> rows, const std::string& title);

}  // namespace popi
