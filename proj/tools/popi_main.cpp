// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
//
// popi — preference-inference personalization lab.
//
//   popi gen-world    --config configs/default.cfg --out-dir runs/demo
//   popi train        --config configs/default.cfg --out-dir runs/demo --stage both
//   popi eval         --config configs/default.cfg --out-dir runs/demo
//   popi verify-bound --config configs/default.cfg --out-dir runs/demo
//   popi report       --config configs/default.cfg --out-dir runs/demo

#include <optional>
#include <string>

#include <CLI11.hpp>

#include "popi/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"popi: summary-based personalization lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/default";
    std::optional<uint64_t> seed;
    std::string stage = "both";
    bool inject_corrupt_loss = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--out-dir", out_dir, "artifact directory");
        cmd->add_option("--seed", seed, "override the config's world seed");
    };

    CLI::App* gen = app.add_subcommand("gen-world", "generate and serialize a synthetic world");
    add_common(gen);

    CLI::App* train = app.add_subcommand("train", "run the two-stage training procedure");
    add_common(train);
    train->add_option("--stage", stage, "1, 2, or both")
        ->check(CLI::IsMember({"1", "2", "both"}));

    CLI::App* eval = app.add_subcommand("eval", "evaluate all comparison modes");
    add_common(eval);

    CLI::App* verify = app.add_subcommand("verify-bound", "check the loss decomposition and bound");
    add_common(verify);
    verify->add_flag("--inject-corrupt-loss", inject_corrupt_loss,
                     "testing aid: corrupt the loss term so validation must fail");

    CLI::App* report = app.add_subcommand("report", "print tables and training summaries");
    add_common(report);

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) return popi::cmd_gen_world(config_path, out_dir, seed);
    if (train->parsed()) {
        popi::TrainStage s = popi::TrainStage::both;
        if (stage == "1") s = popi::TrainStage::stage1;
        if (stage == "2") s = popi::TrainStage::stage2;
        return popi::cmd_train(config_path, out_dir, s, seed);
    }
    if (eval->parsed()) return popi::cmd_eval(config_path, out_dir, seed);
    if (verify->parsed())
        return popi::cmd_verify_bound(config_path, out_dir, seed, inject_corrupt_loss);
    if (report->parsed()) return popi::cmd_report(config_path, out_dir, seed);
    return popi::kExitError;
}
