// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "popi/objectives.hpp"
#include "popi/token.hpp"

namespace popi {

/// Hidden ground truth for one synthetic user: linear weights over the
/// response feature axes. Only evaluation code may read it.
struct Persona {
    std::vector<double> weights;
    int id = 0;
};

struct UserRecord {
    Persona persona;  // hidden from all training code paths
    TokenSeq signals;
    std::vector<PreferencePair> pairs;
    std::vector<PreferencePair> heldout_pairs;
};

struct WorldConfig {
    int num_users = 64;
    int feature_dim = 3;  // K: K-1 token-class fractions plus a length feature
    int vocab_size = 8;
    double signal_noise = 0.1;    // per-token corruption probability in [0,1]
    int signal_verbosity = 64;    // rendered signal length (0 = bare encoding)
    double label_temperature = 1.0;
    int pairs_per_user = 4;
    int heldout_per_user = 8;
    int prompt_len = 3;
    int response_max_len = 3;
    uint64_t seed = 1;

    void validate() const;
    Vocab vocab() const { return Vocab(vocab_size); }
    /// Quantization levels available per persona dimension. Encoding groups
    /// start past the scored tokens: dim k, level l -> K + 1 + k*levels + l.
    int levels_per_dim() const { return (vocab_size - 1 - feature_dim) / feature_dim; }
};

struct World {
    WorldConfig cfg;
    std::vector<UserRecord> users;
};

/// Deterministic world synthesis: personas on a quantization grid, signals as
/// a noisy redundant token rendering padded with distractors, preference
/// labels drawn from the Bradley-Terry rule on persona utilities.
World generate_world(const WorldConfig& cfg);

/// Deterministic feature map: fractions of each designated token class
/// (K-1 singleton classes at tokens 2..K) plus a half-weighted
/// length / response_max_len feature. The empty sequence maps to zeros.
std::vector<double> response_features(const TokenSeq& seq, const WorldConfig& cfg);

/// persona.weights . response_features(response).
double oracle_utility(const Persona& persona, const TokenSeq& response, const WorldConfig& cfg);

/// P(a preferred over b) under the world's label rule.
double true_preference_prob(const Persona& persona, const TokenSeq& resp_a, const TokenSeq& resp_b,
                            const WorldConfig& cfg);

/// Best-effort inverse of the signal rendering (majority vote per dimension).
/// Exact when signal_noise == 0 and signal_verbosity == 0.
std::vector<double> decode_signals(const TokenSeq& signals, const WorldConfig& cfg);

/// Copies the training-visible slice out of a world.
std::vector<TrainUser> train_slice(std::span<const UserRecord> users);

// Line-delimited serialization: a JSON header line (format, version, config,
// config hash) followed by one JSON record per user.
void save_world(const World& world, const std::string& path, uint64_t config_hash);

struct LoadedWorld {
    World world;
    uint64_t config_hash;
};

LoadedWorld load_world(const std::string& path);

}  // namespace popi
