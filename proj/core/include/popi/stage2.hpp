// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "popi/objectives.hpp"
#include "popi/policy.hpp"

namespace popi {

/// What the generator is conditioned on during supervised fine-tuning.
/// `policy` is the optimized path; `raw_signals` and `none` exist for the
/// aligned baselines.
enum class SummarySource { none, raw_signals, policy };

struct Stage2Config {
    int steps = 400;
    double lr = 1e-6;
    int warmup_steps = 150;
    int batch_users = 8;
    int z_samples = 1;
    double max_grad_norm = 5.0;
    uint64_t seed = 0;

    void validate() const;
};

struct Stage2Record {
    int step = 0;
    double loss = 0.0;
    double mean_summary_len = 0.0;
    double grad_norm = 0.0;
};

struct Stage2Result {
    Policy policy;
    std::vector<Stage2Record> history;
};

/// Gradient descent on the summary-augmented objective with the inference
/// policy frozen. Summaries are resampled every step from a per-step derived
/// seed, so each minibatch sees a fresh draw from the summary channel.
Stage2Result train_stage2(const Policy& gen_init, const Policy& gen_ref, const Policy* inf_frozen,
                          SummarySource source, std::span<const TrainUser> users,
                          const ObjectiveConfig& cfg_obj, const Stage2Config& cfg);

}  // namespace popi
