// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "popi/objectives.hpp"
#include "popi/policy.hpp"
#include "popi/synthworld.hpp"

namespace popi {

/// One prompt with two candidate responses, shared across users so the
/// label's conditional distributions are genuine mixtures.
struct PairContext {
    TokenSeq prompt;
    TokenSeq resp_a;
    TokenSeq resp_b;
};

/// A fully enumerable evaluation slice: users (personas + signals) and shared
/// pair contexts, with the world config supplying features and temperature.
struct InfoSlice {
    WorldConfig world;
    std::vector<Persona> personas;
    std::vector<TokenSeq> signals;  // one per persona
    std::vector<PairContext> contexts;
};

InfoSlice make_info_slice(const World& world, int n_users, int n_contexts, uint64_t seed);

/// Exact decomposition of the expected summary-augmented loss:
///   l_sa = kl_term + entropy_H - mutual_info_I,
/// with bound_gap = l_sa - (entropy_H - mutual_info_I) and constant_C the
/// entropy term. Every field comes from exhaustive sums, no sampling.
struct InfoReport {
    double l_sa = 0.0;
    double kl_term = 0.0;
    double entropy_H = 0.0;
    double mutual_info_I = 0.0;
    double bound_gap = 0.0;
    double constant_C = 0.0;
};

/// Throws InvariantViolationError when the decomposition identity, the
/// nonnegativity constraints, or the bound fail at the given tolerance.
void validate_info_report(const InfoReport& r, double tol = 1e-8);

/// Partition term Z(x, z) = sum_y pi_ref(y|x) * pi_gen(y|x,z) / pi_ref(y|x),
/// by exact enumeration of the response space.
double implicit_reward_partition(const Policy& gen, const Policy& gen_ref, const TokenSeq& prompt,
                                 const TokenSeq& summary, double beta,
                                 size_t cap = kDefaultEnumerationCap);

/// beta * log(pi_gen(y|x,z) / pi_ref(y|x)) + beta * log Z(x,z).
double implicit_reward(const Policy& gen, const Policy& gen_ref, const TokenSeq& prompt,
                       const TokenSeq& response, const TokenSeq& summary, double beta,
                       size_t cap = kDefaultEnumerationCap);

/// sigma(r(chosen) - r(rejected)); the partition terms cancel, so this equals
/// sigma(beta * delta) and -log of it is the pointwise DPO loss.
double bt_probability(const Policy& gen, const Policy& gen_ref, const PreferencePair& pair,
                      const TokenSeq& summary, double beta, size_t cap = kDefaultEnumerationCap);

/// Populates an InfoReport from exact sums over the slice's label, summary,
/// and user spaces, then validates it. Spaces above the caps are rejected.
InfoReport exact_info_report(const Policy& gen, const Policy& gen_ref, const Policy& inf,
                             const InfoSlice& slice, double beta, size_t z_cap = 4096,
                             size_t y_cap = 4096);

/// Exact gradient of the slice's expected summary-augmented loss with respect
/// to the inference policy, via full summary enumeration. Drives trajectory
/// studies of how minimizing the loss moves the mutual information.
std::vector<double> info_lsa_grad_wrt_inf(const Policy& gen, const Policy& gen_ref,
                                          const Policy& inf, const InfoSlice& slice, double beta,
                                          size_t z_cap = 4096);

}  // namespace popi
