// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace popi {

// The CLI commands, callable in-process so tests can drive them directly.
// Exit codes: 0 ok, 2 configuration error (bad config, missing or mismatched
// artifacts), 3 invariant violation, 1 anything else.

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInvariant = 3;

enum class TrainStage { stage1 = 1, stage2 = 2, both = 0 };

int cmd_gen_world(const std::string& config_path, const std::string& out_dir,
                  std::optional<uint64_t> seed_override = std::nullopt);

int cmd_train(const std::string& config_path, const std::string& out_dir, TrainStage stage,
              std::optional<uint64_t> seed_override = std::nullopt);

int cmd_eval(const std::string& config_path, const std::string& out_dir,
             std::optional<uint64_t> seed_override = std::nullopt);

int cmd_verify_bound(const std::string& config_path, const std::string& out_dir,
                     std::optional<uint64_t> seed_override = std::nullopt,
                     bool inject_corrupt_loss = false);

int cmd_report(const std::string& config_path, const std::string& out_dir,
               std::optional<uint64_t> seed_override = std::nullopt);

// Artifact names inside an out-dir.
namespace artifact {
inline constexpr const char* kWorld = "world.popiw";
inline constexpr const char* kGenRef = "gen_ref.ckpt";
inline constexpr const char* kInferenceRef = "inference_ref.ckpt";
inline constexpr const char* kInference = "inference.ckpt";
inline constexpr const char* kGenPopi = "gen_popi.ckpt";
inline constexpr const char* kGenRawAligned = "gen_raw_aligned.ckpt";
inline constexpr const char* kGenInfAligned = "gen_inference_aligned.ckpt";
inline constexpr const char* kHistoryStage1 = "history_stage1.jsonl";
inline constexpr const char* kHistoryStage2Popi = "history_stage2_popi.jsonl";
inline constexpr const char* kHistoryStage2Raw = "history_stage2_raw.jsonl";
inline constexpr const char* kHistoryStage2Inf = "history_stage2_inference.jsonl";
inline constexpr const char* kMetricsJsonl = "metrics.jsonl";
inline constexpr const char* kMetricsTable = "metrics.txt";
inline constexpr const char* kInfoReport = "info_report.json";
}  // namespace artifact

}  // namespace popi
