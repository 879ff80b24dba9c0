// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/stage2.hpp"

#include "popi/errors.hpp"
#include "popi/mathutil.hpp"
#include "popi/rng.hpp"
#include "popi/schedule.hpp"

namespace popi {

void Stage2Config::validate() const {
    if (steps < 0) throw InvalidInputError("stage2 steps must be >= 0");
    if (!(lr > 0.0)) throw InvalidInputError("stage2 lr must be positive");
    if (batch_users < 1 || z_samples < 1) throw InvalidInputError("bad stage2 batch configuration");
}

Stage2Result train_stage2(const Policy& gen_init, const Policy& gen_ref, const Policy* inf_frozen,
                          SummarySource source, std::span<const TrainUser> users,
                          const ObjectiveConfig& cfg_obj, const Stage2Config& cfg) {
    cfg.validate();
    if (users.empty()) throw InvalidInputError("stage 2 needs users");
    if (gen_init.frozen()) throw FrozenPolicyError("stage 2 cannot train a frozen generator");
    if (source == SummarySource::policy) {
        if (inf_frozen == nullptr) throw InvalidInputError("policy summary source needs a policy");
        if (!inf_frozen->frozen())
            throw InvalidInputError("stage 2 requires the inference policy to be frozen");
    }

    Stage2Result result{gen_init, {}};
    result.history.reserve(static_cast<size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<size_t> batch;
        if (static_cast<int>(users.size()) <= cfg.batch_users) {
            batch.resize(users.size());
            for (size_t i = 0; i < users.size(); ++i) batch[i] = i;
        } else {
            Rng rng(mix_seed(cfg.seed, 0x7332, static_cast<uint64_t>(step)));
            batch = rng.sample_without_replacement(users.size(),
                                                   static_cast<size_t>(cfg.batch_users));
        }
        std::vector<TrainUser> minibatch;
        minibatch.reserve(batch.size());
        for (size_t idx : batch) minibatch.push_back(users[idx]);

        // Fresh summaries each step: the seed folds in the step index so the
        // expectation over the summary channel is resampled, not cached.
        const uint64_t step_seed = mix_seed(cfg.seed, 0x7a73, static_cast<uint64_t>(step));
        const SummaryProvider provider = [&](size_t, const TrainUser& user, size_t pair_idx,
                                             int sample_idx) -> TokenSeq {
            switch (source) {
                case SummarySource::none: return {};
                case SummarySource::raw_signals: return user.signals;
                case SummarySource::policy:
                default:
                    return inf_frozen->sample(
                        user.signals,
                        mix_seed(step_seed, fnv1a(std::span<const int>(user.signals)),
                                 static_cast<uint64_t>(pair_idx),
                                 static_cast<uint64_t>(sample_idx)),
                        inf_frozen->arch().max_out);
            }
        };

        GenGrad g = sa_batch_grad(result.policy, gen_ref, minibatch, cfg_obj, cfg.z_samples,
                                  provider);
        const double lr_t = cfg.lr * lr_schedule_factor(step, cfg.steps, cfg.warmup_steps);
        const double grad_norm = l2_norm(g.grad);
        double scale = -lr_t;  // descent
        if (cfg.max_grad_norm > 0.0 && grad_norm > cfg.max_grad_norm)
            scale *= cfg.max_grad_norm / grad_norm;
        for (double& v : g.grad) v *= scale;
        result.policy.apply_update(g.grad);
        result.history.push_back(Stage2Record{step, g.loss, g.mean_summary_len, grad_norm});
    }
    return result;
}

}  // namespace popi
