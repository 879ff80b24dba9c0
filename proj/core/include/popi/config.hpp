// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "popi/grpo.hpp"
#include "popi/objectives.hpp"
#include "popi/stage2.hpp"
#include "popi/synthworld.hpp"

namespace popi {

/// Everything one experiment run needs, parsed from a sectioned key = value
/// config file. Unknown sections or keys are hard errors with line numbers.
struct RunConfig {
    WorldConfig world;

    ObjectiveVariant variant = ObjectiveVariant::dpo;
    double beta = 0.01;
    double alpha = -1.0;  // < 0: use the coupled default
    size_t enumeration_cap = kDefaultEnumerationCap;
    int kl_mc_samples = 32;

    struct PolicySection {
        int embed_dim = 8;
        int hidden_dim = 16;
        int context_window = 128;
        int summary_max_len = 2;
        double priming_gain = 8.0;            // generators and the zoo
        double inference_priming_gain = 0.0;  // the summary policy learns its
                                              // mapping; echo bias off by default
    } policy;

    struct GrpoSection {
        int group_size = 8;
        int steps = 600;
        double lr = 1e-6;
        double clip_eps = 0.2;
        double kl_weight = -1.0;  // < 0: use the objective's alpha
        int warmup_steps = 150;
        int batch_users = 8;
        bool normalize_advantages = true;
        double max_grad_norm = 5.0;
    } grpo;

    struct Stage2Section {
        int steps = 400;
        double lr = 1e-6;
        int warmup_steps = 150;
        int batch_users = 8;
        int z_samples = 1;
        double max_grad_norm = 5.0;
    } stage2;

    struct EvalSection {
        int samples_per_prompt = 1;
    } eval;

    struct InfoboundSection {
        int slice_users = 4;
        int slice_contexts = 3;
    } infobound;

    uint64_t config_hash = 0;  // over the resolved canonical form

    // Resolved module configs and derived seeds.
    ObjectiveConfig objective() const;
    GrpoConfig grpo_config() const;
    Stage2Config stage2_config(uint64_t variant_tag) const;
    PolicyArch generator_arch() const;
    PolicyArch inference_arch() const;

    uint64_t seed_gen_ref() const;
    uint64_t seed_inference() const;
    uint64_t seed_zoo() const;
    uint64_t seed_eval() const;
    uint64_t seed_verify() const;

    /// The resolved key = value form the hash is computed over.
    std::string canonical_text() const;
};

RunConfig parse_config_text(const std::string& text,
                            std::optional<uint64_t> seed_override = std::nullopt);
RunConfig parse_config_file(const std::string& path,
                            std::optional<uint64_t> seed_override = std::nullopt);

}  // namespace popi
