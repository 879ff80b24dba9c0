// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/eval.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "popi/errors.hpp"
#include "popi/rng.hpp"

namespace popi {

std::string to_string(EvalMode mode) {
    switch (mode) {
        case EvalMode::base_model: return "Base-Model";
        case EvalMode::raw_prompting: return "Raw-Prompting";
        case EvalMode::inference_prompting: return "Inference-Prompting";
        case EvalMode::popi_plug_and_play: return "POPI-Plug-and-Play";
        case EvalMode::raw_aligned: return "Raw-Aligned";
        case EvalMode::inference_aligned: return "Inference-Aligned";
        case EvalMode::popi_full: return "POPI-Full";
    }
    return "unknown";
}

namespace {

constexpr double kMarginTie = 1e-12;

TokenSeq aux_sequence(AuxSource aux, size_t user_idx, const UserRecord& user) {
    switch (aux.kind) {
        case AuxSource::Kind::none: return {};
        case AuxSource::Kind::raw_signals: return user.signals;
        case AuxSource::Kind::summary:
            if (aux.cache == nullptr)
                throw InvalidInputError("summary aux source requires a cache");
            return aux.cache->get(user_idx, user.signals);
    }
    return {};
}

double score_margin(double method_margin, double base_margin) {
    if (std::abs(method_margin - base_margin) <= kMarginTie) return 0.5;
    return method_margin > base_margin ? 1.0 : 0.0;
}

}  // namespace

ModeMetrics eval_mode(const std::string& label, const Policy& method_gen, const Policy& base,
                      AuxSource aux, std::span<const UserRecord> users, const WorldConfig& wcfg,
                      const EvalConfig& cfg) {
    if (users.empty()) throw InvalidInputError("evaluation needs users");
    ModeMetrics m;
    m.mode = label;

    double len_sum = 0.0, acc_sum = 0.0, win_sum = 0.0;
    size_t n_pairs = 0;

    for (size_t u = 0; u < users.size(); ++u) {
        const UserRecord& user = users[u];
        if (user.heldout_pairs.empty()) throw InvalidInputError("user has no held-out pairs");
        const TokenSeq aux_seq = aux_sequence(aux, u, user);

        double user_acc = 0.0, user_win = 0.0;
        for (size_t p = 0; p < user.heldout_pairs.size(); ++p) {
            const PreferencePair& pair = user.heldout_pairs[p];
            const TokenSeq ctx = join_context(aux_seq, pair.prompt);

            const double margin_m =
                method_gen.log_prob(ctx, pair.chosen) - method_gen.log_prob(ctx, pair.rejected);
            const double margin_b =
                base.log_prob(pair.prompt, pair.chosen) - base.log_prob(pair.prompt, pair.rejected);
            user_acc += score_margin(margin_m, margin_b);

            double pair_win = 0.0;
            for (int s = 0; s < cfg.samples_per_prompt; ++s) {
                const uint64_t gseed = mix_seed(cfg.seed, 0x77696e, u, p, static_cast<uint64_t>(s));
                const TokenSeq resp_m = method_gen.sample(ctx, gseed, method_gen.arch().max_out);
                const TokenSeq resp_b = base.sample(pair.prompt, gseed, base.arch().max_out);
                const double um = oracle_utility(user.persona, resp_m, wcfg);
                const double ub = oracle_utility(user.persona, resp_b, wcfg);
                pair_win += um > ub ? 1.0 : (um == ub ? 0.5 : 0.0);
            }
            user_win += pair_win / cfg.samples_per_prompt;

            len_sum += static_cast<double>(aux_seq.size());
            ++n_pairs;
        }
        const double np = static_cast<double>(user.heldout_pairs.size());
        m.per_user_accuracy.push_back(user_acc / np);
        m.per_user_win.push_back(user_win / np);
        acc_sum += user_acc;
        win_sum += user_win;
    }

    m.avg_context_len = len_sum / static_cast<double>(n_pairs);
    m.reward_accuracy = acc_sum / static_cast<double>(n_pairs);
    m.win_rate = win_sum / static_cast<double>(n_pairs);
    return m;
}

double reward_accuracy(const Policy& method_gen, const Policy& base, const Policy* inf,
                       std::span<const UserRecord> users, uint64_t seed) {
    if (users.empty()) throw InvalidInputError("evaluation needs users");
    SummaryCache cache(inf != nullptr ? *inf : method_gen, mix_seed(seed, 0xacc));
    AuxSource aux;
    if (inf != nullptr) {
        aux.kind = AuxSource::Kind::summary;
        aux.cache = &cache;
    }

    double acc = 0.0;
    size_t n = 0;
    for (size_t u = 0; u < users.size(); ++u) {
        const TokenSeq aux_seq = aux_sequence(aux, u, users[u]);
        for (const PreferencePair& pair : users[u].heldout_pairs) {
            const TokenSeq ctx = join_context(aux_seq, pair.prompt);
            const double margin_m =
                method_gen.log_prob(ctx, pair.chosen) - method_gen.log_prob(ctx, pair.rejected);
            const double margin_b =
                base.log_prob(pair.prompt, pair.chosen) - base.log_prob(pair.prompt, pair.rejected);
            acc += score_margin(margin_m, margin_b);
            ++n;
        }
    }
    if (inf != nullptr) cache.assert_single_calls();
    return acc / static_cast<double>(n);
}

double win_rate_oracle_fn(const ResponseSampler& method, const ResponseSampler& base,
                          std::span<const UserRecord> users, const WorldConfig& wcfg,
                          int samples_per_prompt, uint64_t seed) {
    if (users.empty()) throw InvalidInputError("evaluation needs users");
    if (samples_per_prompt < 1) throw InvalidInputError("samples_per_prompt must be >= 1");
    double win = 0.0;
    size_t n = 0;
    for (size_t u = 0; u < users.size(); ++u) {
        for (size_t p = 0; p < users[u].heldout_pairs.size(); ++p) {
            const TokenSeq& prompt = users[u].heldout_pairs[p].prompt;
            double pair_win = 0.0;
            for (int s = 0; s < samples_per_prompt; ++s) {
                const uint64_t gseed = mix_seed(seed, 0x77696e, u, p, static_cast<uint64_t>(s));
                const double um = oracle_utility(users[u].persona, method(u, prompt, gseed), wcfg);
                const double ub = oracle_utility(users[u].persona, base(u, prompt, gseed), wcfg);
                pair_win += um > ub ? 1.0 : (um == ub ? 0.5 : 0.0);
            }
            win += pair_win / samples_per_prompt;
            ++n;
        }
    }
    return win / static_cast<double>(n);
}

double win_rate_oracle(const Policy& method_gen, const Policy& base, const Policy* inf,
                       std::span<const UserRecord> users, const WorldConfig& wcfg,
                       int samples_per_prompt, uint64_t seed) {
    SummaryCache cache(inf != nullptr ? *inf : method_gen, mix_seed(seed, 0xacc));
    const ResponseSampler method = [&](size_t u, const TokenSeq& prompt, uint64_t s) {
        const TokenSeq summary = inf != nullptr ? cache.get(u, users[u].signals) : TokenSeq{};
        return personalized_generate(method_gen, prompt, summary, s);
    };
    const ResponseSampler base_fn = [&](size_t, const TokenSeq& prompt, uint64_t s) {
        return base.sample(prompt, s, base.arch().max_out);
    };
    const double w = win_rate_oracle_fn(method, base_fn, users, wcfg, samples_per_prompt, seed);
    if (inf != nullptr) cache.assert_single_calls();
    return w;
}

double avg_context_len(AuxSource aux, std::span<const UserRecord> users) {
    if (users.empty()) throw InvalidInputError("evaluation needs users");
    double sum = 0.0;
    for (size_t u = 0; u < users.size(); ++u)
        sum += static_cast<double>(aux_sequence(aux, u, users[u]).size());
    return sum / static_cast<double>(users.size());
}

std::vector<ModeMetrics> run_matrix(const World& world, const EvalPolicies& policies,
                                    const EvalConfig& cfg) {
    SummaryCache cache_ref(policies.inf_ref, mix_seed(cfg.seed, 0x5a72));
    SummaryCache cache_opt(policies.inf_opt, mix_seed(cfg.seed, 0x5a6f));

    const AuxSource none{AuxSource::Kind::none, nullptr};
    const AuxSource raw{AuxSource::Kind::raw_signals, nullptr};
    const AuxSource sum_ref{AuxSource::Kind::summary, &cache_ref};
    const AuxSource sum_opt{AuxSource::Kind::summary, &cache_opt};

    struct Row {
        EvalMode mode;
        const Policy* gen;
        AuxSource aux;
    };
    const Row rows[] = {
        {EvalMode::base_model, &policies.gen_ref, none},
        {EvalMode::raw_prompting, &policies.gen_ref, raw},
        {EvalMode::inference_prompting, &policies.gen_ref, sum_ref},
        {EvalMode::popi_plug_and_play, &policies.gen_ref, sum_opt},
        {EvalMode::raw_aligned, &policies.gen_raw, raw},
        {EvalMode::inference_aligned, &policies.gen_inf, sum_ref},
        {EvalMode::popi_full, &policies.gen_popi, sum_opt},
    };

    std::vector<ModeMetrics> out;
    out.reserve(kNumEvalModes);
    for (const Row& r : rows)
        out.push_back(eval_mode(to_string(r.mode), *r.gen, policies.gen_ref, r.aux, world.users,
                                world.cfg, cfg));
    cache_ref.assert_single_calls();
    cache_opt.assert_single_calls();
    return out;
}

std::vector<ModeMetrics> transfer_matrix(const World& world, std::span<const Policy> zoo,
                                         const Policy& inf_opt, const EvalConfig& cfg) {
    std::vector<ModeMetrics> out;
    out.reserve(zoo.size());
    for (size_t i = 0; i < zoo.size(); ++i) {
        SummaryCache cache(inf_opt, mix_seed(cfg.seed, 0x5a6f));
        AuxSource aux{AuxSource::Kind::summary, &cache};
        ModeMetrics m = eval_mode("POPI-Plug-and-Play @ zoo-" + std::to_string(i), zoo[i], zoo[i],
                                  aux, world.users, world.cfg, cfg);
        cache.assert_single_calls();
        out.push_back(std::move(m));
    }
    return out;
}

std::string format_metrics_table(std::span<const ModeMetrics> rows, const std::string& title) {
    std::ostringstream os;
    os << title << '\n';
    os << std::left << std::setw(34) << "Method" << std::right << std::setw(12) << "Avg. Len."
       << std::setw(12) << "Acc. (%)" << std::setw(14) << "Win Rate (%)" << '\n';
    os << std::string(72, '-') << '\n';
    os << std::fixed << std::setprecision(2);
    for (const ModeMetrics& m : rows) {
        os << std::left << std::setw(34) << m.mode << std::right;
        if (m.avg_context_len == 0.0)
            os << std::setw(12) << "--";
        else
            os << std::setw(12) << m.avg_context_len;
        os << std::setw(12) << 100.0 * m.reward_accuracy << std::setw(14) << 100.0 * m.win_rate
           << '\n';
    }
    return os.str();
}

}  // namespace popi
