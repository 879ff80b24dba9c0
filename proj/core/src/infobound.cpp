// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/infobound.hpp"

#include <cmath>
#include <string>

#include "popi/errors.hpp"
#include "popi/mathutil.hpp"
#include "popi/rng.hpp"

namespace popi {

namespace {

Token random_content(Rng& rng, const WorldConfig& cfg) {
    return 2 + static_cast<Token>(rng.uniform_int(static_cast<uint64_t>(cfg.vocab_size - 2)));
}

TokenSeq random_response(Rng& rng, const WorldConfig& cfg) {
    const int len = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.response_max_len)));
    TokenSeq out(static_cast<size_t>(len));
    for (Token& t : out) t = random_content(rng, cfg);
    return out;
}

void check_space(const char* name, const Vocab& vocab, int max_len, size_t cap) {
    const size_t space = sequence_space_size(vocab, max_len);
    if (space > cap)
        throw EnumerationTooLargeError(std::string(name) + " space " + std::to_string(space) +
                                       " exceeds cap " + std::to_string(cap));
}

}  // namespace

InfoSlice make_info_slice(const World& world, int n_users, int n_contexts, uint64_t seed) {
    if (n_users < 1 || n_users > static_cast<int>(world.users.size()))
        throw InvalidInputError("slice user count out of range");
    if (n_contexts < 1) throw InvalidInputError("slice needs at least one context");

    InfoSlice slice;
    slice.world = world.cfg;
    for (int i = 0; i < n_users; ++i) {
        slice.personas.push_back(world.users[static_cast<size_t>(i)].persona);
        slice.signals.push_back(world.users[static_cast<size_t>(i)].signals);
    }
    Rng rng(mix_seed(world.cfg.seed, 0x1f0, seed));
    for (int c = 0; c < n_contexts; ++c) {
        PairContext ctx;
        ctx.prompt.resize(static_cast<size_t>(world.cfg.prompt_len));
        for (Token& t : ctx.prompt) t = random_content(rng, world.cfg);
        ctx.resp_a = random_response(rng, world.cfg);
        ctx.resp_b = random_response(rng, world.cfg);
        while (ctx.resp_a == ctx.resp_b) ctx.resp_b = random_response(rng, world.cfg);
        slice.contexts.push_back(std::move(ctx));
    }
    return slice;
}

void validate_info_report(const InfoReport& r, double tol) {
    const auto fail = [](const std::string& what) {
        throw InvariantViolationError("info report invariant failed: " + what);
    };
    for (double v : {r.l_sa, r.kl_term, r.entropy_H, r.mutual_info_I, r.bound_gap, r.constant_C})
        if (!std::isfinite(v)) fail("non-finite field");
    if (r.kl_term < -1e-10) fail("negative KL term");
    if (r.mutual_info_I < -1e-10) fail("negative mutual information");
    if (r.bound_gap < -tol) fail("bound violated: l_sa < H - I");
    if (std::abs(r.l_sa - (r.kl_term + r.entropy_H - r.mutual_info_I)) > tol)
        fail("decomposition identity broken");
    if (std::abs(r.bound_gap - r.kl_term) > tol) fail("bound gap does not equal the KL term");
}

double implicit_reward_partition(const Policy& gen, const Policy& gen_ref, const TokenSeq& prompt,
                                 const TokenSeq& summary, double beta, size_t cap) {
    (void)beta;
    check_space("response", gen.vocab(), gen.arch().max_out, cap);
    const TokenSeq ctx = join_context(summary, prompt);
    const ExactDistribution ref = gen_ref.enumerate_distribution(prompt, gen_ref.arch().max_out, cap);
    double z = 0.0;
    for (size_t i = 0; i < ref.support.size(); ++i) {
        const double log_ratio =
            gen.log_prob(ctx, ref.support[i]) - gen_ref.log_prob(prompt, ref.support[i]);
        z += ref.probs[i] * std::exp(log_ratio);
    }
    return z;
}

double implicit_reward(const Policy& gen, const Policy& gen_ref, const TokenSeq& prompt,
                       const TokenSeq& response, const TokenSeq& summary, double beta,
                       size_t cap) {
    const double z = implicit_reward_partition(gen, gen_ref, prompt, summary, beta, cap);
    const TokenSeq ctx = join_context(summary, prompt);
    return beta * (gen.log_prob(ctx, response) - gen_ref.log_prob(prompt, response)) +
           beta * std::log(z);
}

double bt_probability(const Policy& gen, const Policy& gen_ref, const PreferencePair& pair,
                      const TokenSeq& summary, double beta, size_t cap) {
    const double rc = implicit_reward(gen, gen_ref, pair.prompt, pair.chosen, summary, beta, cap);
    const double rr = implicit_reward(gen, gen_ref, pair.prompt, pair.rejected, summary, beta, cap);
    return sigmoid(rc - rr);
}

InfoReport exact_info_report(const Policy& gen, const Policy& gen_ref, const Policy& inf,
                             const InfoSlice& slice, double beta, size_t z_cap, size_t y_cap) {
    if (slice.personas.empty() || slice.contexts.empty())
        throw InvalidInputError("info slice must have users and contexts");
    if (slice.personas.size() != slice.signals.size())
        throw InvalidInputError("slice personas/signals size mismatch");
    check_space("summary", inf.vocab(), inf.arch().max_out, z_cap);
    check_space("response", gen.vocab(), gen.arch().max_out, y_cap);

    const size_t n_users = slice.personas.size();
    const size_t n_ctx = slice.contexts.size();
    const double user_w = 1.0 / static_cast<double>(n_users);
    const double ctx_w = 1.0 / static_cast<double>(n_ctx);

    // Summary channel per user. All users share one support layout.
    std::vector<ExactDistribution> zdist;
    zdist.reserve(n_users);
    for (size_t i = 0; i < n_users; ++i)
        zdist.push_back(inf.enumerate_distribution(slice.signals[i], inf.arch().max_out, z_cap));
    const size_t n_z = zdist.front().support.size();

    InfoReport report;
    for (size_t c = 0; c < n_ctx; ++c) {
        const PairContext& pc = slice.contexts[c];

        // True Bradley-Terry probability of "a preferred" per user.
        std::vector<double> q(n_users);
        for (size_t i = 0; i < n_users; ++i)
            q[i] = true_preference_prob(slice.personas[i], pc.resp_a, pc.resp_b, slice.world);

        // Model margins per summary. The partition terms cancel pairwise, so
        // the model's label probability is sigma(beta * delta).
        std::vector<double> beta_delta(n_z);
        for (size_t zi = 0; zi < n_z; ++zi) {
            const TokenSeq ctx = join_context(zdist.front().support[zi], pc.prompt);
            const double delta =
                (gen.log_prob(ctx, pc.resp_a) - gen_ref.log_prob(pc.prompt, pc.resp_a)) -
                (gen.log_prob(ctx, pc.resp_b) - gen_ref.log_prob(pc.prompt, pc.resp_b));
            beta_delta[zi] = beta * delta;
        }

        // Marginal label distribution given the context alone.
        double p_plus = 0.0;
        for (size_t i = 0; i < n_users; ++i) p_plus += user_w * q[i];
        report.entropy_H += ctx_w * binary_entropy(p_plus);

        for (size_t zi = 0; zi < n_z; ++zi) {
            // Joint over (label, z): users are uniform, labels and summaries
            // are conditionally independent given the user.
            double pz = 0.0, joint_plus = 0.0;
            for (size_t i = 0; i < n_users; ++i) {
                const double w = user_w * zdist[i].probs[zi];
                pz += w;
                joint_plus += w * q[i];
            }
            if (pz <= 0.0) continue;
            const double cond_plus = joint_plus / pz;

            const double nll_plus = softplus(-beta_delta[zi]);   // -log P_model(a wins)
            const double nll_minus = softplus(beta_delta[zi]);   // -log P_model(b wins)

            report.l_sa += ctx_w * (joint_plus * nll_plus + (pz - joint_plus) * nll_minus);
            report.kl_term +=
                ctx_w * pz *
                (xlogy(cond_plus, cond_plus) + cond_plus * nll_plus +
                 xlogy(1.0 - cond_plus, 1.0 - cond_plus) + (1.0 - cond_plus) * nll_minus);
            report.mutual_info_I += ctx_w * pz *
                                    (xlogy(cond_plus, cond_plus / p_plus) +
                                     xlogy(1.0 - cond_plus, (1.0 - cond_plus) / (1.0 - p_plus)));
        }
    }

    report.constant_C = report.entropy_H;
    report.bound_gap = report.l_sa - (report.entropy_H - report.mutual_info_I);
    validate_info_report(report);
    return report;
}

std::vector<double> info_lsa_grad_wrt_inf(const Policy& gen, const Policy& gen_ref,
                                          const Policy& inf, const InfoSlice& slice, double beta,
                                          size_t z_cap) {
    check_space("summary", inf.vocab(), inf.arch().max_out, z_cap);
    const size_t n_users = slice.personas.size();
    const double user_w = 1.0 / static_cast<double>(n_users);
    const double ctx_w = 1.0 / static_cast<double>(slice.contexts.size());

    std::vector<double> grad(inf.num_params(), 0.0);
    for (size_t i = 0; i < n_users; ++i) {
        const ExactDistribution zd =
            inf.enumerate_distribution(slice.signals[i], inf.arch().max_out, z_cap);
        for (size_t zi = 0; zi < zd.support.size(); ++zi) {
            // Expected pointwise loss for this user under summary z.
            double loss = 0.0;
            for (const PairContext& pc : slice.contexts) {
                const TokenSeq ctx = join_context(zd.support[zi], pc.prompt);
                const double bd =
                    beta *
                    ((gen.log_prob(ctx, pc.resp_a) - gen_ref.log_prob(pc.prompt, pc.resp_a)) -
                     (gen.log_prob(ctx, pc.resp_b) - gen_ref.log_prob(pc.prompt, pc.resp_b)));
                const double qa =
                    true_preference_prob(slice.personas[i], pc.resp_a, pc.resp_b, slice.world);
                loss += ctx_w * (qa * softplus(-bd) + (1.0 - qa) * softplus(bd));
            }
            // Score-function form of d/dphi sum_z pi(z) * loss(z).
            const std::vector<double> g = inf.grad_log_prob(slice.signals[i], zd.support[zi]);
            const double w = user_w * zd.probs[zi] * loss;
            for (size_t k = 0; k < grad.size(); ++k) grad[k] += w * g[k];
        }
    }
    return grad;
}

}  // namespace popi
