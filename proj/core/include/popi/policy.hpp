// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "popi/token.hpp"

namespace popi {

inline constexpr size_t kDefaultEnumerationCap = 4096;

/// Shape of the per-step network. Logits for output position j are
///   W2 * tanh(W1 * (pool(context) + pos_emb[j]) + b1) + b2
///     + priming_gain * (E * pool(context)),
/// a softmax over the vocab, where pool() is a segment-wise mean of the
/// context embeddings (aux and prompt segments pooled separately and
/// summed). The bilinear priming term biases content tokens already present
/// in the context; every policy in a run shares this mechanism even when
/// embeddings and widths differ, which is what lets inferred summaries
/// steer generators they were never trained against, and its EOS exclusion
/// means richer contexts lean longer. Position max_out emits EOS with
/// probability 1, so the induced distribution over sequences of length
/// <= max_out is proper.
struct PolicyArch {
    int embed_dim = 8;
    int hidden_dim = 16;
    int context_window = 128;  // longest accepted conditioning context
    int max_out = 3;           // output positions before EOS is forced
    double priming_gain = 8.0;
};

enum class PolicyRole : uint8_t {
    inference = 0,             // pi_phi
    generation = 1,            // pi_theta
    reference_inference = 2,   // pi_phi_ref
    reference_generation = 3,  // pi_theta_ref
    off_the_shelf = 4,
};

std::string to_string(PolicyRole role);

/// Exhaustive distribution over every sequence of length <= the enumerated
/// cap, ordered by length then lexicographically.
struct ExactDistribution {
    std::vector<TokenSeq> support;
    std::vector<double> probs;

    double total() const;
    /// Probability of `seq`, or 0 if outside the support.
    double prob_of(const TokenSeq& seq) const;
    size_t index_of(const TokenSeq& seq) const;  // support.size() if absent
};

/// A small categorical sequence policy with exact log-probabilities,
/// analytic parameter gradients, deterministic sampling, and full-support
/// enumeration on tiny spaces. Value type: copying snapshots parameters.
/// Read-side calls are const and safe to run concurrently; updates go
/// through the single-writer set_params/apply_update path.
class Policy {
  public:
    Policy(Vocab vocab, PolicyArch arch, PolicyRole role, uint64_t init_seed);

    /// All-zero parameters: every per-step distribution is uniform.
    static Policy make_uniform(Vocab vocab, PolicyArch arch, PolicyRole role);

    const Vocab& vocab() const { return vocab_; }
    const PolicyArch& arch() const { return arch_; }
    PolicyRole role() const { return role_; }
    void set_role(PolicyRole role) { role_ = role; }

    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }
    Policy frozen_copy(PolicyRole role) const;

    size_t num_params() const { return params_.size(); }
    std::span<const double> params() const { return params_; }
    void set_params(std::span<const double> p);     // throws FrozenPolicyError
    void apply_update(std::span<const double> d);   // throws FrozenPolicyError, NumericError

    /// Log-probability of `seq` given `context`, including the terminating
    /// EOS step. Always <= 0 and finite.
    double log_prob(const TokenSeq& context, const TokenSeq& seq) const;

    /// Deterministic ancestral sample, truncated at min(max_len, arch.max_out).
    TokenSeq sample(const TokenSeq& context, uint64_t rng_seed, int max_len) const;

    /// d log_prob / d params. Frozen policies refuse (gradients exist only to
    /// feed updates, and plug-and-play paths must never need them).
    std::vector<double> grad_log_prob(const TokenSeq& context, const TokenSeq& seq) const;

    /// Backpropagates an arbitrary objective through the per-step logits:
    /// given dJ/dlogits[j][t] for positions 0..n-1, returns dJ/dparams.
    /// grad_log_prob and the analytic KL gradient are both built on this.
    std::vector<double> grad_from_step_dlogits(
        const TokenSeq& context, const std::vector<std::vector<double>>& dlogits) const;

    /// Every sequence of length <= min(max_len, arch.max_out) with its exact
    /// probability. Probabilities sum to 1; when max_len >= arch.max_out each
    /// equals exp(log_prob(...)). Throws EnumerationTooLargeError above `cap`.
    ExactDistribution enumerate_distribution(const TokenSeq& context, int max_len,
                                             size_t cap = kDefaultEnumerationCap) const;

    /// Per-position categorical tables p[j][token] for positions 0..steps-1
    /// (steps <= arch.max_out). The building block for sampling, enumeration,
    /// and analytic KL.
    std::vector<std::vector<double>> step_probs(const TokenSeq& context, int steps) const;

    bool same_shape(const Policy& other) const;

    /// Per-position pooling weights: each segment (split at the last
    /// separator) contributes its mean embedding to the context pool.
    static std::vector<double> context_pool_weights(const TokenSeq& context);

  private:
    void validate_context(const TokenSeq& context) const;
    std::vector<double> pooled_context(const TokenSeq& context) const;

    Vocab vocab_;
    PolicyArch arch_;
    PolicyRole role_;
    bool frozen_ = false;
    std::vector<double> params_;

    // Offsets into params_ for each block.
    size_t off_embed_, off_pos_, off_w1_, off_b1_, off_w2_, off_b2_;

    friend struct PolicyForward;
};

/// Number of sequences of length <= max_len over a vocab (excluding EOS).
size_t sequence_space_size(const Vocab& vocab, int max_len);

/// Exact KL(p || q) between two policies' sequence distributions on the same
/// context, by full enumeration. Both policies must share vocab and max_out.
double kl_exact_enumerated(const Policy& p, const Policy& q, const TokenSeq& context,
                           size_t cap = kDefaultEnumerationCap);

// --- checkpoint I/O ---------------------------------------------------------
// Binary layout: magic "POPI1", u32 vocab, u32 embed, u32 hidden, u32 window,
// u32 max_out, f64 priming_gain, u8 role, u8 frozen, u64 config_hash,
// u64 n_params, then n_params little-endian f64 values. Loaders reject any
// header mismatch.

void save_checkpoint(const Policy& policy, const std::string& path, uint64_t config_hash);

struct LoadedCheckpoint {
    Policy policy;
    uint64_t config_hash;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace popi
