// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "popi/errors.hpp"
#include "popi/mathutil.hpp"
#include "popi/rng.hpp"

namespace popi {

namespace {

constexpr int kWorldFormatVersion = 1;

// Tag constants for per-entity seed streams.
constexpr uint64_t kPersonaTag = 0x7065;
constexpr uint64_t kSignalTag = 0x7369;
constexpr uint64_t kPairTag = 0x7061;
constexpr uint64_t kHeldoutTag = 0x6865;

double level_to_weight(int level, int levels) {
    if (levels == 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(level) / static_cast<double>(levels - 1);
}

int weight_to_level(double w, int levels) {
    if (levels == 1) return 0;
    const double idx = (w + 1.0) * static_cast<double>(levels - 1) / 2.0;
    return std::clamp(static_cast<int>(std::lround(idx)), 0, levels - 1);
}

// Persona dimensions encode into token groups disjoint from the scored
// singleton classes (tokens 2..K), so raw signals never carry the
// utility-bearing tokens except as injected noise.
Token encode_token(int dim, int level, int levels, const WorldConfig& cfg) {
    return cfg.feature_dim + 1 + dim * levels + level;
}

Token random_content(Rng& rng, const WorldConfig& cfg) {
    return 2 + static_cast<Token>(rng.uniform_int(static_cast<uint64_t>(cfg.vocab_size - 2)));
}

TokenSeq random_response(Rng& rng, const WorldConfig& cfg) {
    const int len = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.response_max_len)));
    TokenSeq out(static_cast<size_t>(len));
    for (Token& t : out) t = random_content(rng, cfg);
    return out;
}

TokenSeq render_signals(const Persona& persona, const WorldConfig& cfg, Rng& rng) {
    const int K = cfg.feature_dim;
    const int levels = cfg.levels_per_dim();
    const int len = std::max(K, cfg.signal_verbosity);

    // Redundant persona copies fill two thirds of the budget; distractors
    // the rest.
    const int copies = std::max(1, (2 * len / 3) / K);
    TokenSeq out;
    out.reserve(static_cast<size_t>(len));
    for (int rep = 0; rep < copies; ++rep)
        for (int k = 0; k < K; ++k) {
            Token t = encode_token(
                k, weight_to_level(persona.weights[static_cast<size_t>(k)], levels), levels, cfg);
            if (rng.uniform() < cfg.signal_noise) t = random_content(rng, cfg);
            out.push_back(t);
        }
    while (static_cast<int>(out.size()) < len) out.push_back(random_content(rng, cfg));

    // Seeded Fisher-Yates interleave. Order carries no information (the
    // encoding identifies its dimension by token value), so shuffling only
    // removes positional shortcuts.
    for (size_t i = out.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(i));
        std::swap(out[i - 1], out[j]);
    }
    return out;
}

PreferencePair draw_pair(const Persona& persona, const WorldConfig& cfg, Rng& rng) {
    PreferencePair pair;
    pair.prompt.resize(static_cast<size_t>(cfg.prompt_len));
    for (Token& t : pair.prompt) t = random_content(rng, cfg);

    TokenSeq a = random_response(rng, cfg);
    TokenSeq b = random_response(rng, cfg);
    while (a == b) b = random_response(rng, cfg);

    const double p_a = true_preference_prob(persona, a, b, cfg);
    const bool a_chosen = rng.uniform() < p_a;
    pair.chosen = a_chosen ? a : b;
    pair.rejected = a_chosen ? b : a;
    return pair;
}

}  // namespace

void WorldConfig::validate() const {
    if (num_users < 1) throw InvalidInputError("num_users must be >= 1");
    if (feature_dim < 2) throw InvalidInputError("feature_dim must be >= 2");
    if (vocab_size < 1 + feature_dim + 2 * feature_dim)
        throw InvalidInputError(
            "vocab too small: need K-1 scored tokens plus K dims x 2 levels");
    if (signal_noise < 0.0 || signal_noise > 1.0)
        throw InvalidInputError("signal_noise must lie in [0,1]");
    if (signal_verbosity < 0) throw InvalidInputError("signal_verbosity must be >= 0");
    if (!(label_temperature > 0.0)) throw InvalidInputError("label_temperature must be positive");
    if (pairs_per_user < 1 || heldout_per_user < 0)
        throw InvalidInputError("pair counts out of range");
    if (prompt_len < 1 || response_max_len < 1)
        throw InvalidInputError("prompt/response lengths must be >= 1");
}

std::vector<double> response_features(const TokenSeq& seq, const WorldConfig& cfg) {
    const int K = cfg.feature_dim;
    std::vector<double> f(static_cast<size_t>(K), 0.0);
    if (seq.empty()) return f;
    // K-1 designated singleton classes: token 2 scores feature 0, token 3
    // scores feature 1, and so on. Remaining content tokens are neutral.
    for (Token t : seq) {
        const int c = t - 2;
        if (c >= 0 && c < K - 1) f[static_cast<size_t>(c)] += 1.0;
    }
    const double inv_len = 1.0 / static_cast<double>(seq.size());
    for (int c = 0; c + 1 < K; ++c) f[static_cast<size_t>(c)] *= inv_len;
    // Length feature, half-weighted so token composition dominates labels.
    f[static_cast<size_t>(K - 1)] = 0.5 * static_cast<double>(seq.size()) /
                                    static_cast<double>(cfg.response_max_len);
    return f;
}

double oracle_utility(const Persona& persona, const TokenSeq& response, const WorldConfig& cfg) {
    const std::vector<double> f = response_features(response, cfg);
    if (persona.weights.size() != f.size())
        throw InvalidInputError("persona dimension mismatches world feature_dim");
    return dot(persona.weights, f);
}

double true_preference_prob(const Persona& persona, const TokenSeq& resp_a, const TokenSeq& resp_b,
                            const WorldConfig& cfg) {
    const double du = oracle_utility(persona, resp_a, cfg) - oracle_utility(persona, resp_b, cfg);
    return sigmoid(du / cfg.label_temperature);
}

World generate_world(const WorldConfig& cfg) {
    cfg.validate();
    World world;
    world.cfg = cfg;
    world.users.reserve(static_cast<size_t>(cfg.num_users));
    const int levels = cfg.levels_per_dim();

    // Personas come from a balanced grid walk: the quantized type cycles
    // deterministically so every preference direction is equally represented,
    // and the seeded stream only permutes which user lands on which type.
    std::vector<int> type_order(static_cast<size_t>(cfg.num_users));
    {
        int n_types = 1;
        for (int k = 0; k < cfg.feature_dim; ++k) n_types *= levels;
        for (int i = 0; i < cfg.num_users; ++i)
            type_order[static_cast<size_t>(i)] = i % n_types;
        Rng prng(mix_seed(cfg.seed, kPersonaTag));
        for (size_t i = type_order.size(); i > 1; --i)
            std::swap(type_order[i - 1], type_order[static_cast<size_t>(prng.uniform_int(i))]);
    }

    for (int i = 0; i < cfg.num_users; ++i) {
        UserRecord user;
        user.persona.id = i;
        user.persona.weights.resize(static_cast<size_t>(cfg.feature_dim));
        int type = type_order[static_cast<size_t>(i)];
        for (int k = 0; k < cfg.feature_dim; ++k) {
            user.persona.weights[static_cast<size_t>(k)] = level_to_weight(type % levels, levels);
            type /= levels;
        }

        Rng srng(mix_seed(cfg.seed, kSignalTag, static_cast<uint64_t>(i)));
        user.signals = render_signals(user.persona, cfg, srng);

        user.pairs.reserve(static_cast<size_t>(cfg.pairs_per_user));
        for (int p = 0; p < cfg.pairs_per_user; ++p) {
            Rng rng(mix_seed(cfg.seed, kPairTag, static_cast<uint64_t>(i), static_cast<uint64_t>(p)));
            user.pairs.push_back(draw_pair(user.persona, cfg, rng));
        }
        user.heldout_pairs.reserve(static_cast<size_t>(cfg.heldout_per_user));
        for (int p = 0; p < cfg.heldout_per_user; ++p) {
            Rng rng(mix_seed(cfg.seed, kHeldoutTag, static_cast<uint64_t>(i),
                             static_cast<uint64_t>(p)));
            user.heldout_pairs.push_back(draw_pair(user.persona, cfg, rng));
        }
        world.users.push_back(std::move(user));
    }
    return world;
}

std::vector<double> decode_signals(const TokenSeq& signals, const WorldConfig& cfg) {
    const int K = cfg.feature_dim;
    const int levels = cfg.levels_per_dim();
    std::vector<std::vector<int>> votes(static_cast<size_t>(K),
                                        std::vector<int>(static_cast<size_t>(levels), 0));
    for (Token t : signals) {
        const int idx = t - (K + 1);
        if (idx < 0) continue;
        const int dim = idx / levels;
        if (dim >= K) continue;
        votes[static_cast<size_t>(dim)][static_cast<size_t>(idx % levels)] += 1;
    }
    std::vector<double> weights(static_cast<size_t>(K), 0.0);
    for (int k = 0; k < K; ++k) {
        const auto& v = votes[static_cast<size_t>(k)];
        const int best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
        weights[static_cast<size_t>(k)] = level_to_weight(best, levels);
    }
    return weights;
}

std::vector<TrainUser> train_slice(std::span<const UserRecord> users) {
    std::vector<TrainUser> out;
    out.reserve(users.size());
    for (const UserRecord& u : users) out.push_back(TrainUser{u.signals, u.pairs});
    return out;
}

// --- serialization -----------------------------------------------------------

namespace {

using nlohmann::json;

json pair_to_json(const PreferencePair& p) {
    return json{{"x", p.prompt}, {"chosen", p.chosen}, {"rejected", p.rejected}};
}

PreferencePair pair_from_json(const json& j) {
    PreferencePair p;
    p.prompt = j.at("x").get<TokenSeq>();
    p.chosen = j.at("chosen").get<TokenSeq>();
    p.rejected = j.at("rejected").get<TokenSeq>();
    return p;
}

std::string hash_to_hex(uint64_t h) {
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

uint64_t hex_to_hash(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

void save_world(const World& world, const std::string& path, uint64_t config_hash) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw InvalidInputError("cannot open world file for writing: " + path);

    const WorldConfig& c = world.cfg;
    json header{{"format", "popi-world"},
                {"version", kWorldFormatVersion},
                {"config_hash", hash_to_hex(config_hash)},
                {"num_users", world.users.size()},
                {"config",
                 {{"num_users", c.num_users},
                  {"feature_dim", c.feature_dim},
                  {"vocab_size", c.vocab_size},
                  {"signal_noise", c.signal_noise},
                  {"signal_verbosity", c.signal_verbosity},
                  {"label_temperature", c.label_temperature},
                  {"pairs_per_user", c.pairs_per_user},
                  {"heldout_per_user", c.heldout_per_user},
                  {"prompt_len", c.prompt_len},
                  {"response_max_len", c.response_max_len},
                  {"seed", c.seed}}}};
    os << header.dump() << '\n';

    for (const UserRecord& u : world.users) {
        json pairs = json::array(), heldout = json::array();
        for (const auto& p : u.pairs) pairs.push_back(pair_to_json(p));
        for (const auto& p : u.heldout_pairs) heldout.push_back(pair_to_json(p));
        json rec{{"id", u.persona.id},
                 {"persona", u.persona.weights},
                 {"signals", u.signals},
                 {"pairs", pairs},
                 {"heldout", heldout}};
        os << rec.dump() << '\n';
    }
    if (!os) throw InvalidInputError("world write failed: " + path);
}

LoadedWorld load_world(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInputError("cannot open world file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw InvalidInputError("world file is empty: " + path);

    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "popi-world")
        throw InvalidInputError("not a popi world file: " + path);
    if (header.value("version", -1) != kWorldFormatVersion)
        throw InvalidInputError("unsupported world file version in " + path);

    LoadedWorld out;
    out.config_hash = hex_to_hash(header.at("config_hash").get<std::string>());
    const json& c = header.at("config");
    WorldConfig& cfg = out.world.cfg;
    cfg.num_users = c.at("num_users").get<int>();
    cfg.feature_dim = c.at("feature_dim").get<int>();
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.signal_noise = c.at("signal_noise").get<double>();
    cfg.signal_verbosity = c.at("signal_verbosity").get<int>();
    cfg.label_temperature = c.at("label_temperature").get<double>();
    cfg.pairs_per_user = c.at("pairs_per_user").get<int>();
    cfg.heldout_per_user = c.at("heldout_per_user").get<int>();
    cfg.prompt_len = c.at("prompt_len").get<int>();
    cfg.response_max_len = c.at("response_max_len").get<int>();
    cfg.seed = c.at("seed").get<uint64_t>();

    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        UserRecord u;
        u.persona.id = rec.at("id").get<int>();
        u.persona.weights = rec.at("persona").get<std::vector<double>>();
        u.signals = rec.at("signals").get<TokenSeq>();
        for (const json& p : rec.at("pairs")) u.pairs.push_back(pair_from_json(p));
        for (const json& p : rec.at("heldout")) u.heldout_pairs.push_back(pair_from_json(p));
        out.world.users.push_back(std::move(u));
    }
    if (out.world.users.size() != header.at("num_users").get<size_t>())
        throw InvalidInputError("world file user count mismatches header");
    return out;
}

}  // namespace popi
