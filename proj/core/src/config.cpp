// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "popi/errors.hpp"
#include "popi/rng.hpp"

namespace popi {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("expected an integer, got '" + v + "'", line);
    }
}

uint64_t parse_u64(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("expected an unsigned integer, got '" + v + "'", line);
    }
}

double parse_double(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("expected a number, got '" + v + "'", line);
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true/false, got '" + v + "'", line);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

RunConfig parse_config_text(const std::string& text, std::optional<uint64_t> seed_override) {
    RunConfig cfg;

    using Setter = std::function<void(const std::string&, int)>;
    const std::map<std::string, Setter> keys = {
        {"world.num_users", [&](const std::string& v, int l) { cfg.world.num_users = parse_int(v, l); }},
        {"world.feature_dim", [&](const std::string& v, int l) { cfg.world.feature_dim = parse_int(v, l); }},
        {"world.vocab_size", [&](const std::string& v, int l) { cfg.world.vocab_size = parse_int(v, l); }},
        {"world.signal_noise", [&](const std::string& v, int l) { cfg.world.signal_noise = parse_double(v, l); }},
        {"world.signal_verbosity", [&](const std::string& v, int l) { cfg.world.signal_verbosity = parse_int(v, l); }},
        {"world.label_temperature", [&](const std::string& v, int l) { cfg.world.label_temperature = parse_double(v, l); }},
        {"world.pairs_per_user", [&](const std::string& v, int l) { cfg.world.pairs_per_user = parse_int(v, l); }},
        {"world.heldout_per_user", [&](const std::string& v, int l) { cfg.world.heldout_per_user = parse_int(v, l); }},
        {"world.prompt_len", [&](const std::string& v, int l) { cfg.world.prompt_len = parse_int(v, l); }},
        {"world.response_max_len", [&](const std::string& v, int l) { cfg.world.response_max_len = parse_int(v, l); }},
        {"world.seed", [&](const std::string& v, int l) { cfg.world.seed = parse_u64(v, l); }},

        {"objective.variant",
         [&](const std::string& v, int l) {
             if (v == "dpo")
                 cfg.variant = ObjectiveVariant::dpo;
             else if (v == "ipo")
                 cfg.variant = ObjectiveVariant::ipo;
             else
                 throw ConfigError("variant must be dpo or ipo, got '" + v + "'", l);
         }},
        {"objective.beta", [&](const std::string& v, int l) { cfg.beta = parse_double(v, l); }},
        {"objective.alpha", [&](const std::string& v, int l) { cfg.alpha = parse_double(v, l); }},
        {"objective.enumeration_cap",
         [&](const std::string& v, int l) { cfg.enumeration_cap = parse_u64(v, l); }},
        {"objective.kl_mc_samples",
         [&](const std::string& v, int l) { cfg.kl_mc_samples = parse_int(v, l); }},

        {"policy.embed_dim", [&](const std::string& v, int l) { cfg.policy.embed_dim = parse_int(v, l); }},
        {"policy.hidden_dim", [&](const std::string& v, int l) { cfg.policy.hidden_dim = parse_int(v, l); }},
        {"policy.context_window", [&](const std::string& v, int l) { cfg.policy.context_window = parse_int(v, l); }},
        {"policy.summary_max_len", [&](const std::string& v, int l) { cfg.policy.summary_max_len = parse_int(v, l); }},
        {"policy.priming_gain", [&](const std::string& v, int l) { cfg.policy.priming_gain = parse_double(v, l); }},
        {"policy.inference_priming_gain",
         [&](const std::string& v, int l) { cfg.policy.inference_priming_gain = parse_double(v, l); }},

        {"grpo.group_size", [&](const std::string& v, int l) { cfg.grpo.group_size = parse_int(v, l); }},
        {"grpo.steps", [&](const std::string& v, int l) { cfg.grpo.steps = parse_int(v, l); }},
        {"grpo.lr", [&](const std::string& v, int l) { cfg.grpo.lr = parse_double(v, l); }},
        {"grpo.clip_eps", [&](const std::string& v, int l) { cfg.grpo.clip_eps = parse_double(v, l); }},
        {"grpo.kl_weight", [&](const std::string& v, int l) { cfg.grpo.kl_weight = parse_double(v, l); }},
        {"grpo.warmup_steps", [&](const std::string& v, int l) { cfg.grpo.warmup_steps = parse_int(v, l); }},
        {"grpo.batch_users", [&](const std::string& v, int l) { cfg.grpo.batch_users = parse_int(v, l); }},
        {"grpo.normalize_advantages",
         [&](const std::string& v, int l) { cfg.grpo.normalize_advantages = parse_bool(v, l); }},
        {"grpo.max_grad_norm",
         [&](const std::string& v, int l) { cfg.grpo.max_grad_norm = parse_double(v, l); }},

        {"stage2.steps", [&](const std::string& v, int l) { cfg.stage2.steps = parse_int(v, l); }},
        {"stage2.lr", [&](const std::string& v, int l) { cfg.stage2.lr = parse_double(v, l); }},
        {"stage2.warmup_steps", [&](const std::string& v, int l) { cfg.stage2.warmup_steps = parse_int(v, l); }},
        {"stage2.batch_users", [&](const std::string& v, int l) { cfg.stage2.batch_users = parse_int(v, l); }},
        {"stage2.z_samples", [&](const std::string& v, int l) { cfg.stage2.z_samples = parse_int(v, l); }},
        {"stage2.max_grad_norm",
         [&](const std::string& v, int l) { cfg.stage2.max_grad_norm = parse_double(v, l); }},

        {"eval.samples_per_prompt",
         [&](const std::string& v, int l) { cfg.eval.samples_per_prompt = parse_int(v, l); }},

        {"infobound.slice_users",
         [&](const std::string& v, int l) { cfg.infobound.slice_users = parse_int(v, l); }},
        {"infobound.slice_contexts",
         [&](const std::string& v, int l) { cfg.infobound.slice_contexts = parse_int(v, l); }},
    };

    static const char* kSections[] = {"world",  "objective", "policy",   "grpo",
                                      "stage2", "eval",      "infobound"};

    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("malformed section header", line_no);
            section = trim(t.substr(1, t.size() - 2));
            bool known = false;
            for (const char* s : kSections) known = known || section == s;
            if (!known) throw ConfigError("unknown section [" + section + "]", line_no);
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
        if (section.empty()) throw ConfigError("key outside of any [section]", line_no);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const auto it = keys.find(section + "." + key);
        if (it == keys.end())
            throw ConfigError("unknown key '" + key + "' in section [" + section + "]", line_no);
        it->second(value, line_no);
    }

    if (seed_override) cfg.world.seed = *seed_override;

    try {
        cfg.world.validate();
        if (!(cfg.beta > 0.0)) throw InvalidInputError("objective.beta must be positive");
        if (cfg.policy.summary_max_len < 1)
            throw InvalidInputError("policy.summary_max_len must be >= 1");
        const int needed = std::max(cfg.world.feature_dim, cfg.world.signal_verbosity) + 1 +
                           cfg.world.prompt_len;
        if (needed > cfg.policy.context_window)
            throw InvalidInputError("policy.context_window too small for signals + prompt (need " +
                                    std::to_string(needed) + ")");
    } catch (const InvalidInputError& e) {
        throw ConfigError(e.what());
    }

    cfg.config_hash = fnv1a(cfg.canonical_text());
    return cfg;
}

RunConfig parse_config_file(const std::string& path, std::optional<uint64_t> seed_override) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str(), seed_override);
}

std::string RunConfig::canonical_text() const {
    std::ostringstream os;
    os << "world.num_users=" << world.num_users << '\n'
       << "world.feature_dim=" << world.feature_dim << '\n'
       << "world.vocab_size=" << world.vocab_size << '\n'
       << "world.signal_noise=" << fmt(world.signal_noise) << '\n'
       << "world.signal_verbosity=" << world.signal_verbosity << '\n'
       << "world.label_temperature=" << fmt(world.label_temperature) << '\n'
       << "world.pairs_per_user=" << world.pairs_per_user << '\n'
       << "world.heldout_per_user=" << world.heldout_per_user << '\n'
       << "world.prompt_len=" << world.prompt_len << '\n'
       << "world.response_max_len=" << world.response_max_len << '\n'
       << "world.seed=" << world.seed << '\n'
       << "objective.variant=" << (variant == ObjectiveVariant::dpo ? "dpo" : "ipo") << '\n'
       << "objective.beta=" << fmt(beta) << '\n'
       << "objective.alpha=" << fmt(alpha < 0.0 ? coupled_alpha(variant, beta) : alpha) << '\n'
       << "objective.enumeration_cap=" << enumeration_cap << '\n'
       << "objective.kl_mc_samples=" << kl_mc_samples << '\n'
       << "policy.embed_dim=" << policy.embed_dim << '\n'
       << "policy.hidden_dim=" << policy.hidden_dim << '\n'
       << "policy.context_window=" << policy.context_window << '\n'
       << "policy.summary_max_len=" << policy.summary_max_len << '\n'
       << "policy.priming_gain=" << fmt(policy.priming_gain) << '\n'
       << "policy.inference_priming_gain=" << fmt(policy.inference_priming_gain) << '\n'
       << "grpo.group_size=" << grpo.group_size << '\n'
       << "grpo.steps=" << grpo.steps << '\n'
       << "grpo.lr=" << fmt(grpo.lr) << '\n'
       << "grpo.clip_eps=" << fmt(grpo.clip_eps) << '\n'
       << "grpo.kl_weight="
       << fmt(grpo.kl_weight < 0.0
                  ? (alpha < 0.0 ? coupled_alpha(variant, beta) : alpha)
                  : grpo.kl_weight)
       << '\n'
       << "grpo.warmup_steps=" << grpo.warmup_steps << '\n'
       << "grpo.batch_users=" << grpo.batch_users << '\n'
       << "grpo.normalize_advantages=" << (grpo.normalize_advantages ? "true" : "false") << '\n'
       << "grpo.max_grad_norm=" << fmt(grpo.max_grad_norm) << '\n'
       << "stage2.steps=" << stage2.steps << '\n'
       << "stage2.lr=" << fmt(stage2.lr) << '\n'
       << "stage2.warmup_steps=" << stage2.warmup_steps << '\n'
       << "stage2.batch_users=" << stage2.batch_users << '\n'
       << "stage2.z_samples=" << stage2.z_samples << '\n'
       << "stage2.max_grad_norm=" << fmt(stage2.max_grad_norm) << '\n'
       << "eval.samples_per_prompt=" << eval.samples_per_prompt << '\n'
       << "infobound.slice_users=" << infobound.slice_users << '\n'
       << "infobound.slice_contexts=" << infobound.slice_contexts << '\n';
    return os.str();
}

ObjectiveConfig RunConfig::objective() const {
    ObjectiveConfig o = alpha < 0.0 ? make_objective_config(variant, beta)
                                    : make_objective_config(variant, beta, alpha);
    o.enumeration_cap = enumeration_cap;
    o.kl_mc_samples = kl_mc_samples;
    return o;
}

GrpoConfig RunConfig::grpo_config() const {
    GrpoConfig g;
    g.group_size = grpo.group_size;
    g.steps = grpo.steps;
    g.lr = grpo.lr;
    g.clip_eps = grpo.clip_eps;
    g.kl_weight = grpo.kl_weight < 0.0 ? objective().alpha : grpo.kl_weight;
    g.seed = mix_seed(world.seed, 0x7331);
    g.warmup_steps = grpo.warmup_steps;
    g.batch_users = grpo.batch_users;
    g.normalize_advantages = grpo.normalize_advantages;
    g.max_grad_norm = grpo.max_grad_norm;
    g.enumeration_cap = enumeration_cap;
    g.kl_mc_samples = kl_mc_samples;
    return g;
}

Stage2Config RunConfig::stage2_config(uint64_t variant_tag) const {
    Stage2Config s;
    s.steps = stage2.steps;
    s.lr = stage2.lr;
    s.warmup_steps = stage2.warmup_steps;
    s.batch_users = stage2.batch_users;
    s.z_samples = stage2.z_samples;
    s.max_grad_norm = stage2.max_grad_norm;
    s.seed = mix_seed(world.seed, 0x7332, variant_tag);
    return s;
}

PolicyArch RunConfig::generator_arch() const {
    PolicyArch a;
    a.embed_dim = policy.embed_dim;
    a.hidden_dim = policy.hidden_dim;
    a.context_window = policy.context_window;
    a.max_out = world.response_max_len;
    a.priming_gain = policy.priming_gain;
    return a;
}

PolicyArch RunConfig::inference_arch() const {
    PolicyArch a = generator_arch();
    a.max_out = policy.summary_max_len;
    a.priming_gain = policy.inference_priming_gain;
    return a;
}

uint64_t RunConfig::seed_gen_ref() const { return mix_seed(world.seed, 0x67656e); }
uint64_t RunConfig::seed_inference() const { return mix_seed(world.seed, 0x696e66); }
uint64_t RunConfig::seed_zoo() const { return mix_seed(world.seed, 0x7a6f6f); }
uint64_t RunConfig::seed_eval() const { return mix_seed(world.seed, 0x6576); }
uint64_t RunConfig::seed_verify() const { return mix_seed(world.seed, 0x7662); }

}  // namespace popi
