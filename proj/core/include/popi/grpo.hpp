// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "popi/objectives.hpp"
#include "popi/policy.hpp"

namespace popi {

/// Stage-1 reinforcement settings. The lr / batch size / warmup defaults
/// mirror the reference recipe; the shipped configs scale lr up for the
/// desk-sized policies trained here.
struct GrpoConfig {
    int group_size = 8;  // G summaries per user per rollout
    int steps = 600;
    double lr = 1e-6;
    double clip_eps = 0.2;    // importance-ratio clip band
    double kl_weight = 0.0;   // realizes the unified objective's alpha
    uint64_t seed = 0;
    int warmup_steps = 150;
    int batch_users = 8;
    bool normalize_advantages = true;
    double max_grad_norm = 5.0;  // clip threshold for the update direction
    size_t enumeration_cap = kDefaultEnumerationCap;
    int kl_mc_samples = 32;

    void validate() const;
};

/// One group of summaries for one user, with group-relative advantages.
struct GroupRollout {
    size_t user_index = 0;
    TokenSeq signals;                   // the rollout context
    std::vector<TokenSeq> summaries;    // G entries
    std::vector<double> rewards;        // -mean pair loss per summary
    std::vector<double> advantages;     // mean-centered (optionally normalized)
    std::vector<double> old_log_probs;  // behavior-policy log probs at rollout time
};

/// Mean-centers rewards; when `normalize`, divides by (population std + 1e-8).
/// Constant groups come back as all zeros.
std::vector<double> compute_advantages(std::span<const double> rewards, bool normalize);

/// Samples G summaries from the inference policy for one user and scores each
/// against the frozen reference generator: reward = -(mean summary-augmented
/// loss over the user's pairs).
GroupRollout rollout_group(const Policy& inf, const Policy& gen_ref, const TrainUser& user,
                           size_t user_index, const ObjectiveConfig& cfg_obj,
                           const GrpoConfig& cfg, uint64_t seed);

struct GrpoStepMetrics {
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double mean_summary_len = 0.0;
    double grad_norm = 0.0;
    double lr_used = 0.0;
};

/// One clipped policy-gradient ascent step on the group-relative surrogate
/// minus kl_weight * KL(inf || inf_ref), evaluated on the given rollouts.
GrpoStepMetrics grpo_step(Policy& inf, const Policy& inf_ref,
                          std::span<const GroupRollout> rollouts, const GrpoConfig& cfg,
                          int step_index = 0);

struct Stage1Record {
    int step = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double mean_summary_len = 0.0;
    double grad_norm = 0.0;
};

struct Stage1Result {
    Policy policy;
    std::vector<Stage1Record> history;
};

/// Full stage-1 run: seeded user minibatches, on-policy rollouts, one update
/// per step. gen_ref and inf_ref must be frozen; they are never touched.
Stage1Result train_stage1(const Policy& inf_init, const Policy& inf_ref, const Policy& gen_ref,
                          std::span<const TrainUser> users, const ObjectiveConfig& cfg_obj,
                          const GrpoConfig& cfg);

}  // namespace popi
