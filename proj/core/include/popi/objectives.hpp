// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "popi/policy.hpp"
#include "popi/token.hpp"

namespace popi {

/// One labeled preference judgment: given `prompt`, `chosen` beat `rejected`.
struct PreferencePair {
    TokenSeq prompt;
    TokenSeq chosen;
    TokenSeq rejected;
};

void validate_pair(const Vocab& vocab, const PreferencePair& pair);

/// The training-visible slice of a user: raw signals plus labeled pairs.
/// Hidden personas deliberately have no representation here, so training
/// code cannot read them even by accident.
struct TrainUser {
    TokenSeq signals;
    std::vector<PreferencePair> pairs;
};

enum class ObjectiveVariant { dpo, ipo };

struct ObjectiveConfig {
    ObjectiveVariant variant = ObjectiveVariant::dpo;
    double beta = 0.01;
    double alpha = 0.0;  // KL regularization weight
    size_t enumeration_cap = kDefaultEnumerationCap;
    int kl_mc_samples = 32;  // trajectory count when above the cap
};

/// alpha = 0.002*beta for DPO, 0.002*(2/beta) for IPO. Keeps the KL term on
/// the same scale as the preference term across beta choices.
double coupled_alpha(ObjectiveVariant variant, double beta);

ObjectiveConfig make_objective_config(ObjectiveVariant variant, double beta);
ObjectiveConfig make_objective_config(ObjectiveVariant variant, double beta, double alpha);

// Scalar loss cores. sa_loss_pointwise and its gradients are built on these,
// and tests pin the objective identities against them directly.
double dpo_loss_from_margin(double beta, double delta);   // -log sigma(beta*delta)
double ipo_loss_from_delta(double delta, double beta);    // (delta - 1/(2 beta))^2
double loss_from_delta(const ObjectiveConfig& cfg, double delta);
double dloss_ddelta(const ObjectiveConfig& cfg, double delta);

/// Per-user DPO loss against a dedicated policy (no summaries involved).
double dpo_dedicated_loss(const Policy& policy, const Policy& ref, const PreferencePair& pair,
                          const ObjectiveConfig& cfg);

/// Difference of log-ratios with the policy conditioned on (prompt, summary)
/// and the reference conditioned on the prompt alone.
double sa_delta(const Policy& gen, const Policy& gen_ref, const PreferencePair& pair,
                const TokenSeq& summary);

/// Summary-augmented loss for a single (pair, summary) draw.
double sa_loss_pointwise(const Policy& gen, const Policy& gen_ref, const PreferencePair& pair,
                         const TokenSeq& summary, const ObjectiveConfig& cfg);

/// Monte-Carlo estimate of the summary-augmented objective: mean over users,
/// their pairs, and `z_samples` summary draws per pair. Summary seeds are
/// derived from (rng_seed, signal content, pair index, sample index), so the
/// estimate is deterministic and users with identical data contribute
/// identical terms.
double sa_loss_batch(const Policy& gen, const Policy& gen_ref, const Policy& inf,
                     std::span<const TrainUser> users, const ObjectiveConfig& cfg, int z_samples,
                     uint64_t rng_seed);

// --- sequence-level KL ------------------------------------------------------

enum class KlEstimator { enumeration, sampled_per_token };

struct KlResult {
    double value = 0.0;
    KlEstimator estimator = KlEstimator::enumeration;
};

/// KL(p || q) over whole sequences on one context: exact by enumeration when
/// the space fits under `cap`, otherwise per-position categorical KL summed
/// along trajectories sampled from p (unbiased, low variance).
KlResult sequence_kl(const Policy& p, const Policy& q, const TokenSeq& context, size_t cap,
                     uint64_t seed, int num_samples);

struct KlWithGrad {
    double value = 0.0;
    std::vector<double> grad;  // d value / d params of p
    KlEstimator estimator = KlEstimator::enumeration;
};

KlWithGrad sequence_kl_with_grad(const Policy& p, const Policy& q, const TokenSeq& context,
                                 size_t cap, uint64_t seed, int num_samples);

// --- the unified objective (stage-1 form, Policy fixed at its reference) -----

struct UnifiedLoss {
    double total = 0.0;
    double l_sa = 0.0;
    double kl = 0.0;
    KlEstimator kl_estimator = KlEstimator::enumeration;
};

/// l_sa(gen_ref as both policy and reference) + alpha * mean-per-user
/// KL(inf || inf_ref). With alpha == 0 the total is bit-equal to l_sa.
UnifiedLoss unified_loss(const Policy& inf, const Policy& inf_ref, const Policy& gen_ref,
                         std::span<const TrainUser> users, const ObjectiveConfig& cfg,
                         int z_samples, uint64_t rng_seed);

struct GenGrad {
    std::vector<double> grad;
    double loss = 0.0;              // the matching sa_loss_batch value
    double mean_summary_len = 0.0;
};

/// Supplies the summary for one (user, pair, sample) term of the batch.
using SummaryProvider =
    std::function<TokenSeq(size_t user_idx, const TrainUser& user, size_t pair_idx, int sample_idx)>;

/// Batch loss and generator gradient with summaries chosen by `provider`.
GenGrad sa_batch_grad(const Policy& gen, const Policy& gen_ref, std::span<const TrainUser> users,
                      const ObjectiveConfig& cfg, int z_samples, const SummaryProvider& provider);

/// Exact gradient of sa_loss_batch with respect to the generation policy's
/// parameters, with summaries held fixed by the same seed derivation. The
/// KL term of the unified objective does not involve the generator, so this
/// is also the generator gradient of the unified objective.
GenGrad grad_unified_wrt_gen(const Policy& gen, const Policy& gen_ref, const Policy& inf,
                             std::span<const TrainUser> users, const ObjectiveConfig& cfg,
                             int z_samples, uint64_t rng_seed);

}  // namespace popi
