// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "popi/config.hpp"
#include "popi/errors.hpp"
#include "popi/eval.hpp"
#include "popi/grpo.hpp"
#include "popi/infobound.hpp"
#include "popi/pipeline.hpp"
#include "popi/rng.hpp"
#include "popi/stage2.hpp"
#include "popi/synthworld.hpp"

namespace popi {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string join(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw InvalidInputError(std::string("missing ") + what + ": " + path +
                                " (run the producing command first)");
}

template <class Fn>
int run_guarded(Fn&& fn) {
    try {
        fn();
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidInputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const EnumerationTooLargeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvariantViolationError& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}

World load_world_checked(const RunConfig& cfg, const std::string& out_dir) {
    const std::string path = join(out_dir, artifact::kWorld);
    require_file(path, "world file");
    LoadedWorld loaded = load_world(path);
    if (loaded.config_hash != cfg.config_hash)
        throw InvalidInputError("world file was generated under a different config (hash mismatch)");
    return std::move(loaded.world);
}

Policy load_checkpoint_checked(const RunConfig& cfg, const std::string& out_dir,
                               const char* name) {
    const std::string path = join(out_dir, name);
    require_file(path, "checkpoint");
    LoadedCheckpoint loaded = load_checkpoint(path);
    if (loaded.config_hash != cfg.config_hash)
        throw InvalidInputError(std::string(name) +
                                " was trained under a different config (hash mismatch)");
    return std::move(loaded.policy);
}

void write_stage1_history(const std::string& path, const std::vector<Stage1Record>& history) {
    std::ofstream os(path, std::ios::trunc);
    for (const Stage1Record& r : history) {
        json rec{{"step", r.step},
                 {"mean_reward", r.mean_reward},
                 {"mean_kl", r.mean_kl},
                 {"mean_summary_len", r.mean_summary_len},
                 {"grad_norm", r.grad_norm}};
        os << rec.dump() << '\n';
    }
}

void write_stage2_history(const std::string& path, const std::vector<Stage2Record>& history) {
    std::ofstream os(path, std::ios::trunc);
    for (const Stage2Record& r : history) {
        json rec{{"step", r.step},
                 {"loss", r.loss},
                 {"mean_summary_len", r.mean_summary_len},
                 {"grad_norm", r.grad_norm}};
        os << rec.dump() << '\n';
    }
}

Policy make_gen_ref(const RunConfig& cfg) {
    Policy gen_ref(cfg.world.vocab(), cfg.generator_arch(), PolicyRole::reference_generation,
                   cfg.seed_gen_ref());
    gen_ref.freeze();
    return gen_ref;
}

Policy make_inf_init(const RunConfig& cfg) {
    return Policy(cfg.world.vocab(), cfg.inference_arch(), PolicyRole::inference,
                  cfg.seed_inference());
}

void do_stage1(const RunConfig& cfg, const std::string& out_dir, const World& world) {
    const std::vector<TrainUser> users = train_slice(world.users);
    const Policy gen_ref = make_gen_ref(cfg);
    const Policy inf_init = make_inf_init(cfg);
    const Policy inf_ref = inf_init.frozen_copy(PolicyRole::reference_inference);

    Stage1Result result =
        train_stage1(inf_init, inf_ref, gen_ref, users, cfg.objective(), cfg.grpo_config());

    save_checkpoint(gen_ref, join(out_dir, artifact::kGenRef), cfg.config_hash);
    save_checkpoint(inf_ref, join(out_dir, artifact::kInferenceRef), cfg.config_hash);
    Policy trained = result.policy.frozen_copy(PolicyRole::inference);
    save_checkpoint(trained, join(out_dir, artifact::kInference), cfg.config_hash);
    write_stage1_history(join(out_dir, artifact::kHistoryStage1), result.history);

    if (!result.history.empty())
        std::cout << "stage 1: " << result.history.size() << " steps, mean reward "
                  << result.history.front().mean_reward << " -> "
                  << result.history.back().mean_reward << '\n';
}

void do_stage2(const RunConfig& cfg, const std::string& out_dir, const World& world) {
    const std::vector<TrainUser> users = train_slice(world.users);
    const Policy gen_ref = make_gen_ref(cfg);
    const Policy inf_opt = load_checkpoint_checked(cfg, out_dir, artifact::kInference);
    const Policy inf_ref = make_inf_init(cfg).frozen_copy(PolicyRole::reference_inference);

    // A trainable copy of the frozen reference: same seed, same parameters.
    Policy gen_thawed(cfg.world.vocab(), cfg.generator_arch(), PolicyRole::generation,
                      cfg.seed_gen_ref());

    const ObjectiveConfig obj = cfg.objective();

    struct Variant {
        const char* ckpt;
        const char* history;
        SummarySource source;
        const Policy* inf;
        uint64_t tag;
    };
    const Variant variants[] = {
        {artifact::kGenPopi, artifact::kHistoryStage2Popi, SummarySource::policy, &inf_opt, 0},
        {artifact::kGenRawAligned, artifact::kHistoryStage2Raw, SummarySource::raw_signals,
         nullptr, 1},
        {artifact::kGenInfAligned, artifact::kHistoryStage2Inf, SummarySource::policy, &inf_ref,
         2},
    };
    for (const Variant& v : variants) {
        Stage2Result result = train_stage2(gen_thawed, gen_ref, v.inf, v.source, users, obj,
                                           cfg.stage2_config(v.tag));
        Policy trained = result.policy.frozen_copy(PolicyRole::generation);
        save_checkpoint(trained, join(out_dir, v.ckpt), cfg.config_hash);
        write_stage2_history(join(out_dir, v.history), result.history);
        if (!result.history.empty())
            std::cout << "stage 2 (" << v.ckpt << "): loss " << result.history.front().loss
                      << " -> " << result.history.back().loss << '\n';
    }
}

void write_metrics(const std::string& out_dir, const std::vector<ModeMetrics>& main_rows,
                   const std::vector<ModeMetrics>& transfer_rows) {
    std::ofstream os(join(out_dir, artifact::kMetricsJsonl), std::ios::trunc);
    const auto dump_row = [&os](const char* table, const ModeMetrics& m) {
        json rec{{"table", table},
                 {"mode", m.mode},
                 {"avg_context_len", m.avg_context_len},
                 {"reward_accuracy", m.reward_accuracy},
                 {"win_rate", m.win_rate},
                 {"per_user_accuracy", m.per_user_accuracy},
                 {"per_user_win", m.per_user_win}};
        os << rec.dump() << '\n';
    };
    for (const ModeMetrics& m : main_rows) dump_row("main", m);
    for (const ModeMetrics& m : transfer_rows) dump_row("transfer", m);

    std::ofstream table(join(out_dir, artifact::kMetricsTable), std::ios::trunc);
    table << format_metrics_table(main_rows, "Personalization metrics");
    table << '\n';
    table << format_metrics_table(transfer_rows, "Plug-and-play transfer to frozen generators");
}

}  // namespace

int cmd_gen_world(const std::string& config_path, const std::string& out_dir,
                  std::optional<uint64_t> seed_override) {
    return run_guarded([&] {
        const RunConfig cfg = parse_config_file(config_path, seed_override);
        fs::create_directories(out_dir);
        const World world = generate_world(cfg.world);
        save_world(world, join(out_dir, artifact::kWorld), cfg.config_hash);
        std::cout << "wrote " << join(out_dir, artifact::kWorld) << " (" << world.users.size()
                  << " users)\n";
    });
}

int cmd_train(const std::string& config_path, const std::string& out_dir, TrainStage stage,
              std::optional<uint64_t> seed_override) {
    return run_guarded([&] {
        const RunConfig cfg = parse_config_file(config_path, seed_override);
        fs::create_directories(out_dir);
        const World world = load_world_checked(cfg, out_dir);
        if (stage == TrainStage::stage1 || stage == TrainStage::both)
            do_stage1(cfg, out_dir, world);
        if (stage == TrainStage::stage2 || stage == TrainStage::both)
            do_stage2(cfg, out_dir, world);
    });
}

int cmd_eval(const std::string& config_path, const std::string& out_dir,
             std::optional<uint64_t> seed_override) {
    return run_guarded([&] {
        const RunConfig cfg = parse_config_file(config_path, seed_override);
        const World world = load_world_checked(cfg, out_dir);

        EvalPolicies policies{
            make_gen_ref(cfg),
            make_inf_init(cfg).frozen_copy(PolicyRole::reference_inference),
            load_checkpoint_checked(cfg, out_dir, artifact::kInference),
            load_checkpoint_checked(cfg, out_dir, artifact::kGenPopi),
            load_checkpoint_checked(cfg, out_dir, artifact::kGenRawAligned),
            load_checkpoint_checked(cfg, out_dir, artifact::kGenInfAligned),
            make_offtheshelf_zoo(cfg.world.vocab(), cfg.policy.context_window,
                                 cfg.world.response_max_len, cfg.seed_zoo()),
        };

        EvalConfig ecfg{cfg.eval.samples_per_prompt, cfg.seed_eval()};
        const std::vector<ModeMetrics> rows = run_matrix(world, policies, ecfg);
        const std::vector<ModeMetrics> transfer =
            transfer_matrix(world, policies.zoo, policies.inf_opt, ecfg);

        write_metrics(out_dir, rows, transfer);
        std::cout << format_metrics_table(rows, "Personalization metrics") << '\n'
                  << format_metrics_table(transfer, "Plug-and-play transfer to frozen generators");
    });
}

int cmd_verify_bound(const std::string& config_path, const std::string& out_dir,
                     std::optional<uint64_t> seed_override, bool inject_corrupt_loss) {
    return run_guarded([&] {
        const RunConfig cfg = parse_config_file(config_path, seed_override);
        fs::create_directories(out_dir);
        const World world = generate_world(cfg.world);
        const InfoSlice slice = make_info_slice(world, cfg.infobound.slice_users,
                                                cfg.infobound.slice_contexts, cfg.seed_verify());

        const Policy gen_ref = make_gen_ref(cfg);
        Policy gen(cfg.world.vocab(), cfg.generator_arch(), PolicyRole::generation,
                   mix_seed(cfg.seed_verify(), 0x67));
        const Policy inf = make_inf_init(cfg);

        InfoReport report = exact_info_report(gen, gen_ref, inf, slice, cfg.beta);
        if (inject_corrupt_loss) {
            report.l_sa += 0.1;  // deliberate fault: the identity must now fail
            report.bound_gap = report.l_sa - (report.entropy_H - report.mutual_info_I);
        }

        json rec{{"l_sa", report.l_sa},
                 {"kl_term", report.kl_term},
                 {"entropy_H", report.entropy_H},
                 {"mutual_info_I", report.mutual_info_I},
                 {"bound_gap", report.bound_gap},
                 {"constant_C", report.constant_C}};
        std::ofstream os(join(out_dir, artifact::kInfoReport), std::ios::trunc);
        os << rec.dump(2) << '\n';
        std::cout << rec.dump(2) << '\n';

        validate_info_report(report);
        std::cout << "bound verified: l_sa >= H - I, gap equals KL term\n";
    });
}

int cmd_report(const std::string& config_path, const std::string& out_dir,
               std::optional<uint64_t> seed_override) {
    return run_guarded([&] {
        const RunConfig cfg = parse_config_file(config_path, seed_override);
        (void)cfg;

        const std::string table = join(out_dir, artifact::kMetricsTable);
        if (fs::exists(table)) {
            std::ifstream is(table);
            std::cout << is.rdbuf() << '\n';
        } else {
            std::cout << "(no metrics table yet; run eval)\n";
        }

        const std::string h1 = join(out_dir, artifact::kHistoryStage1);
        if (fs::exists(h1)) {
            std::ifstream is(h1);
            std::string first, last, line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                if (first.empty()) first = line;
                last = line;
            }
            if (!first.empty()) {
                const json a = json::parse(first), b = json::parse(last);
                std::cout << "stage 1: mean reward " << a.at("mean_reward").get<double>() << " -> "
                          << b.at("mean_reward").get<double>() << ", mean summary length "
                          << a.at("mean_summary_len").get<double>() << " -> "
                          << b.at("mean_summary_len").get<double>() << ", mean KL "
                          << a.at("mean_kl").get<double>() << " -> "
                          << b.at("mean_kl").get<double>() << '\n';
            }
        }
        for (const char* name : {artifact::kHistoryStage2Popi, artifact::kHistoryStage2Raw,
                                 artifact::kHistoryStage2Inf}) {
            const std::string path = join(out_dir, name);
            if (!fs::exists(path)) continue;
            std::ifstream is(path);
            std::string first, last, line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                if (first.empty()) first = line;
                last = line;
            }
            if (!first.empty()) {
                const json a = json::parse(first), b = json::parse(last);
                std::cout << name << ": loss " << a.at("loss").get<double>() << " -> "
                          << b.at("loss").get<double>() << '\n';
            }
        }
    });
}

}  // namespace popi
