// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "popi/errors.hpp"
#include "popi/mathutil.hpp"
#include "popi/rng.hpp"
#include "popi/schedule.hpp"

namespace popi {

void GrpoConfig::validate() const {
    if (group_size < 2) throw InvalidInputError("group_size must be >= 2");
    if (!(lr > 0.0)) throw InvalidInputError("lr must be positive");
    if (clip_eps < 0.0) throw InvalidInputError("clip_eps must be nonnegative");
    if (kl_weight < 0.0) throw InvalidInputError("kl_weight must be nonnegative");
    if (steps < 0 || batch_users < 1) throw InvalidInputError("bad step/batch configuration");
}

std::vector<double> compute_advantages(std::span<const double> rewards, bool normalize) {
    if (rewards.size() < 2) throw InvalidInputError("advantage groups need >= 2 rewards");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;

    std::vector<double> adv(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;

    if (normalize) {
        double var = 0.0;
        for (double a : adv) var += a * a;
        const double std_dev = std::sqrt(var / n);
        const double scale = 1.0 / (std_dev + 1e-8);
        for (double& a : adv) a *= scale;
    }
    return adv;
}

GroupRollout rollout_group(const Policy& inf, const Policy& gen_ref, const TrainUser& user,
                           size_t user_index, const ObjectiveConfig& cfg_obj,
                           const GrpoConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (user.pairs.empty()) throw InvalidInputError("rollout user has no pairs");

    GroupRollout out;
    out.user_index = user_index;
    out.signals = user.signals;
    out.summaries.reserve(static_cast<size_t>(cfg.group_size));
    out.rewards.reserve(static_cast<size_t>(cfg.group_size));
    out.old_log_probs.reserve(static_cast<size_t>(cfg.group_size));

    for (int g = 0; g < cfg.group_size; ++g) {
        const TokenSeq z =
            inf.sample(user.signals, mix_seed(seed, 0x726f, static_cast<uint64_t>(g)),
                       inf.arch().max_out);
        double loss = 0.0;
        // Stage 1 keeps the generation model fixed at its reference, so the
        // reward scores how much this summary alone moves the frozen
        // generator's preference margins.
        for (const PreferencePair& pair : user.pairs)
            loss += sa_loss_pointwise(gen_ref, gen_ref, pair, z, cfg_obj);
        out.rewards.push_back(-loss / static_cast<double>(user.pairs.size()));
        out.old_log_probs.push_back(inf.log_prob(user.signals, z));
        out.summaries.push_back(z);
    }
    out.advantages = compute_advantages(out.rewards, cfg.normalize_advantages);
    return out;
}

GrpoStepMetrics grpo_step(Policy& inf, const Policy& inf_ref,
                          std::span<const GroupRollout> rollouts, const GrpoConfig& cfg,
                          int step_index) {
    cfg.validate();
    if (inf.frozen()) throw FrozenPolicyError("grpo_step on a frozen policy");
    if (rollouts.empty()) throw InvalidInputError("grpo_step needs at least one rollout");

    GrpoStepMetrics metrics;
    std::vector<double> direction(inf.num_params(), 0.0);

    size_t total_draws = 0;
    for (const GroupRollout& r : rollouts) total_draws += r.summaries.size();
    const double draw_w = 1.0 / static_cast<double>(total_draws);

    for (const GroupRollout& r : rollouts) {
        for (size_t g = 0; g < r.summaries.size(); ++g) {
            metrics.mean_reward += draw_w * r.rewards[g];
            metrics.mean_summary_len += draw_w * static_cast<double>(r.summaries[g].size());

            const double adv = r.advantages[g];
            if (adv == 0.0) continue;
            const double lp = inf.log_prob(r.signals, r.summaries[g]);
            const double rho = std::exp(lp - r.old_log_probs[g]);
            const double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;
            const double clipped = std::isinf(cfg.clip_eps) ? rho : std::clamp(rho, lo, hi);
            // Gradient of min(rho*adv, clipped*adv): zero once the clipped
            // branch is active and rho sits outside the band.
            double coeff = 0.0;
            if (rho * adv <= clipped * adv)
                coeff = adv * rho;
            else if (rho > lo && rho < hi)
                coeff = adv * rho;
            if (coeff != 0.0) {
                const std::vector<double> g_lp = inf.grad_log_prob(r.signals, r.summaries[g]);
                const double w = draw_w * coeff;
                for (size_t k = 0; k < direction.size(); ++k) direction[k] += w * g_lp[k];
            }
        }
    }

    if (cfg.kl_weight > 0.0) {
        const double roll_w = 1.0 / static_cast<double>(rollouts.size());
        for (const GroupRollout& r : rollouts) {
            const KlWithGrad kl = sequence_kl_with_grad(
                inf, inf_ref, r.signals, cfg.enumeration_cap,
                mix_seed(cfg.seed, 0x6b6c32, static_cast<uint64_t>(step_index), r.user_index),
                cfg.kl_mc_samples);
            metrics.mean_kl += roll_w * kl.value;
            for (size_t k = 0; k < direction.size(); ++k)
                direction[k] -= cfg.kl_weight * roll_w * kl.grad[k];
        }
    }

    metrics.grad_norm = l2_norm(direction);
    metrics.lr_used = cfg.lr * lr_schedule_factor(step_index, cfg.steps, cfg.warmup_steps);
    double scale = metrics.lr_used;
    if (cfg.max_grad_norm > 0.0 && metrics.grad_norm > cfg.max_grad_norm)
        scale *= cfg.max_grad_norm / metrics.grad_norm;
    for (double& d : direction) d *= scale;
    inf.apply_update(direction);
    return metrics;
}

Stage1Result train_stage1(const Policy& inf_init, const Policy& inf_ref, const Policy& gen_ref,
                          std::span<const TrainUser> users, const ObjectiveConfig& cfg_obj,
                          const GrpoConfig& cfg) {
    cfg.validate();
    if (!gen_ref.frozen()) throw InvalidInputError("stage 1 requires a frozen gen_ref");
    if (!inf_ref.frozen()) throw InvalidInputError("stage 1 requires a frozen inf_ref");
    if (users.empty()) throw InvalidInputError("stage 1 needs users");

    Stage1Result result{inf_init, {}};
    result.history.reserve(static_cast<size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        // Seeded minibatch of users; all of them when the world is small.
        std::vector<size_t> batch;
        if (static_cast<int>(users.size()) <= cfg.batch_users) {
            batch.resize(users.size());
            for (size_t i = 0; i < users.size(); ++i) batch[i] = i;
        } else {
            Rng rng(mix_seed(cfg.seed, 0x6261, static_cast<uint64_t>(step)));
            batch = rng.sample_without_replacement(users.size(),
                                                   static_cast<size_t>(cfg.batch_users));
        }

        std::vector<GroupRollout> rollouts;
        rollouts.reserve(batch.size());
        for (size_t idx : batch)
            rollouts.push_back(rollout_group(result.policy, gen_ref, users[idx], idx, cfg_obj, cfg,
                                             mix_seed(cfg.seed, 0x726c, static_cast<uint64_t>(step),
                                                      static_cast<uint64_t>(idx))));

        const GrpoStepMetrics m = grpo_step(result.policy, inf_ref, rollouts, cfg, step);
        result.history.push_back(
            Stage1Record{step, m.mean_reward, m.mean_kl, m.mean_summary_len, m.grad_norm});
    }
    return result;
}

}  // namespace popi
