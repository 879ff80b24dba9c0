// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/objectives.hpp"

#include <cmath>

#include "popi/errors.hpp"
#include "popi/mathutil.hpp"
#include "popi/rng.hpp"

namespace popi {

void validate_pair(const Vocab& vocab, const PreferencePair& pair) {
    validate_seq(vocab, pair.prompt);
    validate_seq(vocab, pair.chosen);
    validate_seq(vocab, pair.rejected);
    if (pair.chosen == pair.rejected)
        throw InvalidInputError("preference pair must have chosen != rejected");
}

double coupled_alpha(ObjectiveVariant variant, double beta) {
    return variant == ObjectiveVariant::dpo ? 0.002 * beta : 0.002 * (2.0 / beta);
}

ObjectiveConfig make_objective_config(ObjectiveVariant variant, double beta) {
    return make_objective_config(variant, beta, coupled_alpha(variant, beta));
}

ObjectiveConfig make_objective_config(ObjectiveVariant variant, double beta, double alpha) {
    if (!(beta > 0.0)) throw InvalidInputError("beta must be positive");
    if (alpha < 0.0) throw InvalidInputError("alpha must be nonnegative");
    ObjectiveConfig cfg;
    cfg.variant = variant;
    cfg.beta = beta;
    cfg.alpha = alpha;
    return cfg;
}

double dpo_loss_from_margin(double beta, double delta) { return softplus(-beta * delta); }

double ipo_loss_from_delta(double delta, double beta) {
    const double d = delta - 1.0 / (2.0 * beta);
    return d * d;
}

double loss_from_delta(const ObjectiveConfig& cfg, double delta) {
    return cfg.variant == ObjectiveVariant::dpo ? dpo_loss_from_margin(cfg.beta, delta)
                                                : ipo_loss_from_delta(delta, cfg.beta);
}

double dloss_ddelta(const ObjectiveConfig& cfg, double delta) {
    if (cfg.variant == ObjectiveVariant::dpo) return -cfg.beta * sigmoid(-cfg.beta * delta);
    return 2.0 * (delta - 1.0 / (2.0 * cfg.beta));
}

double dpo_dedicated_loss(const Policy& policy, const Policy& ref, const PreferencePair& pair,
                          const ObjectiveConfig& cfg) {
    if (cfg.variant != ObjectiveVariant::dpo)
        throw InvalidInputError("dpo_dedicated_loss requires the DPO variant");
    validate_pair(policy.vocab(), pair);
    const double delta = (policy.log_prob(pair.prompt, pair.chosen) -
                          ref.log_prob(pair.prompt, pair.chosen)) -
                         (policy.log_prob(pair.prompt, pair.rejected) -
                          ref.log_prob(pair.prompt, pair.rejected));
    const double loss = dpo_loss_from_margin(cfg.beta, delta);
    if (!std::isfinite(loss)) throw NumericError("non-finite dedicated DPO loss");
    return loss;
}

double sa_delta(const Policy& gen, const Policy& gen_ref, const PreferencePair& pair,
                const TokenSeq& summary) {
    const TokenSeq ctx = join_context(summary, pair.prompt);
    // Reference terms condition on the prompt only; the summary never reaches
    // the reference model.
    return (gen.log_prob(ctx, pair.chosen) - gen_ref.log_prob(pair.prompt, pair.chosen)) -
           (gen.log_prob(ctx, pair.rejected) - gen_ref.log_prob(pair.prompt, pair.rejected));
}

double sa_loss_pointwise(const Policy& gen, const Policy& gen_ref, const PreferencePair& pair,
                         const TokenSeq& summary, const ObjectiveConfig& cfg) {
    validate_pair(gen.vocab(), pair);
    const double loss = loss_from_delta(cfg, sa_delta(gen, gen_ref, pair, summary));
    if (!std::isfinite(loss)) throw NumericError("non-finite summary-augmented loss");
    return loss;
}

namespace {

uint64_t summary_seed(uint64_t rng_seed, const TokenSeq& signals, size_t pair_idx,
                      int sample_idx) {
    return mix_seed(rng_seed, fnv1a(std::span<const int>(signals)),
                    static_cast<uint64_t>(pair_idx), static_cast<uint64_t>(sample_idx));
}

void validate_users(std::span<const TrainUser> users) {
    if (users.empty()) throw InvalidInputError("user list must be nonempty");
    for (const TrainUser& u : users)
        if (u.pairs.empty()) throw InvalidInputError("every user needs a nonempty pair set");
}

}  // namespace

double sa_loss_batch(const Policy& gen, const Policy& gen_ref, const Policy& inf,
                     std::span<const TrainUser> users, const ObjectiveConfig& cfg, int z_samples,
                     uint64_t rng_seed) {
    validate_users(users);
    if (z_samples < 1) throw InvalidInputError("z_samples must be >= 1");

    double user_total = 0.0;
    for (const TrainUser& user : users) {
        double pair_total = 0.0;
        for (size_t p = 0; p < user.pairs.size(); ++p) {
            double sample_total = 0.0;
            for (int s = 0; s < z_samples; ++s) {
                const TokenSeq z = inf.sample(user.signals, summary_seed(rng_seed, user.signals, p, s),
                                              inf.arch().max_out);
                sample_total += sa_loss_pointwise(gen, gen_ref, user.pairs[p], z, cfg);
            }
            pair_total += sample_total / z_samples;
        }
        user_total += pair_total / static_cast<double>(user.pairs.size());
    }
    return user_total / static_cast<double>(users.size());
}

KlResult sequence_kl(const Policy& p, const Policy& q, const TokenSeq& context, size_t cap,
                     uint64_t seed, int num_samples) {
    if (p.vocab().size != q.vocab().size || p.arch().max_out != q.arch().max_out)
        throw InvalidInputError("sequence KL requires matching vocab and max_out");

    if (sequence_space_size(p.vocab(), p.arch().max_out) <= cap)
        return {kl_exact_enumerated(p, q, context, cap), KlEstimator::enumeration};

    // Above the cap: per-position categorical KL summed along trajectories
    // drawn from p. Each visited step contributes its full per-token KL, so
    // the estimator's expectation equals the exact sequence KL.
    const auto tp = p.step_probs(context, p.arch().max_out);
    const auto tq = q.step_probs(context, q.arch().max_out);
    std::vector<double> step_kl(tp.size(), 0.0);
    for (size_t j = 0; j < tp.size(); ++j) {
        double kl = 0.0;
        for (size_t t = 0; t < tp[j].size(); ++t) kl += xlogy(tp[j][t], tp[j][t] / tq[j][t]);
        step_kl[j] = kl;
    }
    double total = 0.0;
    for (int s = 0; s < num_samples; ++s) {
        const TokenSeq z = p.sample(context, mix_seed(seed, 0x6b6c, static_cast<uint64_t>(s)),
                                    p.arch().max_out);
        const size_t visited = z.size() + (static_cast<int>(z.size()) < p.arch().max_out ? 1 : 0);
        for (size_t j = 0; j < visited; ++j) total += step_kl[j];
    }
    return {total / num_samples, KlEstimator::sampled_per_token};
}

KlWithGrad sequence_kl_with_grad(const Policy& p, const Policy& q, const TokenSeq& context,
                                 size_t cap, uint64_t seed, int num_samples) {
    KlWithGrad out;
    out.grad.assign(p.num_params(), 0.0);

    if (sequence_space_size(p.vocab(), p.arch().max_out) <= cap) {
        // Exact closed form for per-position policies: the sequence KL is
        // sum_j reach_j * KL_j with reach_j the probability that position j
        // is visited. Matches the enumeration sum to rounding error, at a
        // fraction of the cost, and differentiates in one backward pass.
        out.estimator = KlEstimator::enumeration;
        const int L = p.arch().max_out;
        const size_t V = static_cast<size_t>(p.vocab().size);
        const auto tp = p.step_probs(context, L);
        const auto tq = q.step_probs(context, L);

        std::vector<double> step_kl(static_cast<size_t>(L), 0.0);
        std::vector<double> reach(static_cast<size_t>(L), 1.0);
        for (int j = 0; j < L; ++j) {
            double kl = 0.0;
            for (size_t t = 0; t < V; ++t)
                kl += xlogy(tp[static_cast<size_t>(j)][t],
                            tp[static_cast<size_t>(j)][t] / tq[static_cast<size_t>(j)][t]);
            step_kl[static_cast<size_t>(j)] = kl;
            if (j + 1 < L)
                reach[static_cast<size_t>(j + 1)] =
                    reach[static_cast<size_t>(j)] * (1.0 - tp[static_cast<size_t>(j)][kEos]);
        }
        for (int j = 0; j < L; ++j)
            out.value += reach[static_cast<size_t>(j)] * step_kl[static_cast<size_t>(j)];

        // suffix_i = sum_{j>i} reach_j * KL_j, for the reach-path gradient.
        std::vector<double> suffix(static_cast<size_t>(L), 0.0);
        for (int j = L - 2; j >= 0; --j)
            suffix[static_cast<size_t>(j)] = suffix[static_cast<size_t>(j + 1)] +
                                             reach[static_cast<size_t>(j + 1)] *
                                                 step_kl[static_cast<size_t>(j + 1)];

        std::vector<std::vector<double>> dlogits(static_cast<size_t>(L),
                                                 std::vector<double>(V, 0.0));
        for (int j = 0; j < L; ++j) {
            const auto& pj = tp[static_cast<size_t>(j)];
            const double continue_p = 1.0 - pj[kEos];
            const double t_j = continue_p > 0.0 ? suffix[static_cast<size_t>(j)] / continue_p : 0.0;
            for (size_t t = 0; t < V; ++t) {
                const double ratio = std::log(pj[t] / tq[static_cast<size_t>(j)][t]);
                double g = reach[static_cast<size_t>(j)] * pj[t] *
                           (ratio - step_kl[static_cast<size_t>(j)]);
                g -= t_j * pj[kEos] * ((t == kEos ? 1.0 : 0.0) - pj[t]);
                dlogits[static_cast<size_t>(j)][t] = g;
            }
        }
        out.grad = p.grad_from_step_dlogits(context, dlogits);
        return out;
    }

    // Score-function estimator: grad E[f] = E[grad_log_p * (f + 1)] with
    // f = log p - log q evaluated on sampled trajectories.
    out.estimator = KlEstimator::sampled_per_token;
    const KlResult value = sequence_kl(p, q, context, cap, seed, num_samples);
    out.value = value.value;
    for (int s = 0; s < num_samples; ++s) {
        const TokenSeq z = p.sample(context, mix_seed(seed, 0x6b6c67, static_cast<uint64_t>(s)),
                                    p.arch().max_out);
        const double f = p.log_prob(context, z) - q.log_prob(context, z);
        const std::vector<double> g = p.grad_log_prob(context, z);
        for (size_t k = 0; k < g.size(); ++k) out.grad[k] += g[k] * (f + 1.0) / num_samples;
    }
    return out;
}

UnifiedLoss unified_loss(const Policy& inf, const Policy& inf_ref, const Policy& gen_ref,
                         std::span<const TrainUser> users, const ObjectiveConfig& cfg,
                         int z_samples, uint64_t rng_seed) {
    validate_users(users);
    UnifiedLoss out;
    out.l_sa = sa_loss_batch(gen_ref, gen_ref, inf, users, cfg, z_samples, rng_seed);
    if (cfg.alpha == 0.0) {
        out.total = out.l_sa;
        return out;
    }
    double kl_sum = 0.0;
    for (size_t u = 0; u < users.size(); ++u) {
        const KlResult r = sequence_kl(inf, inf_ref, users[u].signals, cfg.enumeration_cap,
                                       mix_seed(rng_seed, 0x756b6c, static_cast<uint64_t>(u)),
                                       cfg.kl_mc_samples);
        kl_sum += r.value;
        out.kl_estimator = r.estimator;
    }
    out.kl = kl_sum / static_cast<double>(users.size());
    out.total = out.l_sa + cfg.alpha * out.kl;
    return out;
}

GenGrad sa_batch_grad(const Policy& gen, const Policy& gen_ref, std::span<const TrainUser> users,
                      const ObjectiveConfig& cfg, int z_samples, const SummaryProvider& provider) {
    validate_users(users);
    if (gen.frozen()) throw FrozenPolicyError("generation policy is frozen");
    if (z_samples < 1) throw InvalidInputError("z_samples must be >= 1");

    GenGrad out;
    out.grad.assign(gen.num_params(), 0.0);
    double len_sum = 0.0;
    size_t n_draws = 0;

    const double user_w = 1.0 / static_cast<double>(users.size());
    for (size_t u = 0; u < users.size(); ++u) {
        const TrainUser& user = users[u];
        const double pair_w = user_w / static_cast<double>(user.pairs.size());
        for (size_t p = 0; p < user.pairs.size(); ++p) {
            const PreferencePair& pair = user.pairs[p];
            const double w = pair_w / z_samples;
            for (int s = 0; s < z_samples; ++s) {
                const TokenSeq z = provider(u, user, p, s);
                len_sum += static_cast<double>(z.size());
                ++n_draws;
                const double delta = sa_delta(gen, gen_ref, pair, z);
                out.loss += w * loss_from_delta(cfg, delta);
                const double coeff = w * dloss_ddelta(cfg, delta);
                const TokenSeq ctx = join_context(z, pair.prompt);
                const std::vector<double> gc = gen.grad_log_prob(ctx, pair.chosen);
                const std::vector<double> gr = gen.grad_log_prob(ctx, pair.rejected);
                for (size_t k = 0; k < out.grad.size(); ++k)
                    out.grad[k] += coeff * (gc[k] - gr[k]);
            }
        }
    }
    out.mean_summary_len = n_draws ? len_sum / static_cast<double>(n_draws) : 0.0;
    return out;
}

GenGrad grad_unified_wrt_gen(const Policy& gen, const Policy& gen_ref, const Policy& inf,
                             std::span<const TrainUser> users, const ObjectiveConfig& cfg,
                             int z_samples, uint64_t rng_seed) {
    return sa_batch_grad(gen, gen_ref, users, cfg, z_samples,
                         [&](size_t, const TrainUser& user, size_t pair_idx, int sample_idx) {
                             return inf.sample(user.signals,
                                               summary_seed(rng_seed, user.signals, pair_idx,
                                                            sample_idx),
                                               inf.arch().max_out);
                         });
}

}  // namespace popi
