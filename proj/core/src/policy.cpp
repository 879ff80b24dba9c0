// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#include "popi/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "popi/errors.hpp"
#include "popi/mathutil.hpp"
#include "popi/rng.hpp"

namespace popi {

std::string to_string(PolicyRole role) {
    switch (role) {
        case PolicyRole::inference: return "inference";
        case PolicyRole::generation: return "generation";
        case PolicyRole::reference_inference: return "reference_inference";
        case PolicyRole::reference_generation: return "reference_generation";
        case PolicyRole::off_the_shelf: return "off_the_shelf";
    }
    return "unknown";
}

double ExactDistribution::total() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
}

size_t ExactDistribution::index_of(const TokenSeq& seq) const {
    for (size_t i = 0; i < support.size(); ++i)
        if (support[i] == seq) return i;
    return support.size();
}

double ExactDistribution::prob_of(const TokenSeq& seq) const {
    size_t i = index_of(seq);
    return i < support.size() ? probs[i] : 0.0;
}

Policy::Policy(Vocab vocab, PolicyArch arch, PolicyRole role, uint64_t init_seed)
    : vocab_(vocab), arch_(arch), role_(role) {
    if (arch.embed_dim < 1 || arch.hidden_dim < 1 || arch.context_window < 1 || arch.max_out < 1)
        throw InvalidInputError("policy arch dims must be positive");
    const size_t V = static_cast<size_t>(vocab_.size);
    const size_t D = static_cast<size_t>(arch_.embed_dim);
    const size_t H = static_cast<size_t>(arch_.hidden_dim);
    const size_t L = static_cast<size_t>(arch_.max_out);
    off_embed_ = 0;
    off_pos_ = off_embed_ + V * D;
    off_w1_ = off_pos_ + L * D;
    off_b1_ = off_w1_ + H * D;
    off_w2_ = off_b1_ + H;
    off_b2_ = off_w2_ + V * H;
    params_.assign(off_b2_ + V, 0.0);

    Rng rng(mix_seed(init_seed, 0x706f6c69));  // "poli"
    for (double& p : params_) p = rng.uniform(-0.1, 0.1);
}

Policy Policy::make_uniform(Vocab vocab, PolicyArch arch, PolicyRole role) {
    Policy p(vocab, arch, role, 0);
    std::fill(p.params_.begin(), p.params_.end(), 0.0);
    return p;
}

Policy Policy::frozen_copy(PolicyRole role) const {
    Policy copy = *this;
    copy.role_ = role;
    copy.frozen_ = true;
    return copy;
}

void Policy::set_params(std::span<const double> p) {
    if (frozen_) throw FrozenPolicyError("cannot set parameters of a frozen policy");
    if (p.size() != params_.size()) throw InvalidInputError("parameter vector size mismatch");
    for (double v : p)
        if (!std::isfinite(v)) throw NumericError("non-finite parameter value");
    params_.assign(p.begin(), p.end());
}

void Policy::apply_update(std::span<const double> d) {
    if (frozen_) throw FrozenPolicyError("cannot update a frozen policy");
    if (d.size() != params_.size()) throw InvalidInputError("update vector size mismatch");
    for (size_t i = 0; i < params_.size(); ++i) {
        double v = params_[i] + d[i];
        if (!std::isfinite(v)) throw NumericError("non-finite parameter after update");
        params_[i] = v;
    }
}

bool Policy::same_shape(const Policy& other) const {
    return vocab_.size == other.vocab_.size && arch_.embed_dim == other.arch_.embed_dim &&
           arch_.hidden_dim == other.arch_.hidden_dim && arch_.max_out == other.arch_.max_out;
}

void Policy::validate_context(const TokenSeq& context) const {
    validate_seq(vocab_, context);
    if (static_cast<int>(context.size()) > arch_.context_window)
        throw InvalidInputError("context length " + std::to_string(context.size()) +
                                " exceeds window " + std::to_string(arch_.context_window));
}

std::vector<double> Policy::context_pool_weights(const TokenSeq& context) {
    // Segment-wise mean pooling: the context splits at the last separator
    // into an auxiliary segment (signals or summary, separator included) and
    // a prompt segment, each pooled with its own mean. Conditioning on a
    // summary therefore shifts the pool without diluting the prompt's share.
    std::vector<double> w(context.size(), 0.0);
    if (context.empty()) return w;
    size_t split = 0;  // first index of the prompt segment
    for (size_t i = 0; i < context.size(); ++i)
        if (context[i] == kSep) split = i + 1;
    if (split == 0 || split >= context.size()) {
        const double inv = 1.0 / static_cast<double>(context.size());
        for (double& v : w) v = inv;
        return w;
    }
    const double inv_aux = 1.0 / static_cast<double>(split);
    const double inv_prompt = 1.0 / static_cast<double>(context.size() - split);
    for (size_t i = 0; i < split; ++i) w[i] = inv_aux;
    for (size_t i = split; i < context.size(); ++i) w[i] = inv_prompt;
    return w;
}

std::vector<double> Policy::pooled_context(const TokenSeq& context) const {
    const size_t D = static_cast<size_t>(arch_.embed_dim);
    std::vector<double> pool(D, 0.0);
    if (context.empty()) return pool;
    const std::vector<double> w = context_pool_weights(context);
    for (size_t i = 0; i < context.size(); ++i) {
        const double* row =
            params_.data() + off_embed_ + static_cast<size_t>(context[i]) * D;
        for (size_t d = 0; d < D; ++d) pool[d] += w[i] * row[d];
    }
    return pool;
}

namespace {

// Shared forward pass pieces for one (policy, context).
struct StepForward {
    std::vector<double> input;   // pool + pos_emb[j]
    std::vector<double> hidden;  // tanh activations
    std::vector<double> probs;   // softmax over vocab
};

}  // namespace

struct PolicyForward {
    const Policy& policy;
    std::vector<double> pool;
    std::vector<double> priming;  // priming_gain * (E * pool), one per token

    explicit PolicyForward(const Policy& p, const TokenSeq& context) : policy(p) {
        pool = p.pooled_context(context);
        const size_t V = static_cast<size_t>(p.vocab_.size);
        const size_t D = static_cast<size_t>(p.arch_.embed_dim);
        // EOS is excluded from priming: context mass boosts content tokens
        // only, so richer contexts lean toward longer outputs.
        priming.assign(V, 0.0);
        for (size_t t = 1; t < V; ++t) {
            const double* row = p.params_.data() + p.off_embed_ + t * D;
            double s = 0.0;
            for (size_t d = 0; d < D; ++d) s += row[d] * pool[d];
            priming[t] = p.arch_.priming_gain * s;
        }
    }

    StepForward step(int position) const {
        const size_t V = static_cast<size_t>(policy.vocab_.size);
        const size_t D = static_cast<size_t>(policy.arch_.embed_dim);
        const size_t H = static_cast<size_t>(policy.arch_.hidden_dim);
        const double* par = policy.params_.data();

        StepForward out;
        out.input.resize(D);
        const double* pos = par + policy.off_pos_ + static_cast<size_t>(position) * D;
        for (size_t d = 0; d < D; ++d) out.input[d] = pool[d] + pos[d];

        out.hidden.resize(H);
        for (size_t h = 0; h < H; ++h) {
            const double* w = par + policy.off_w1_ + h * D;
            double s = par[policy.off_b1_ + h];
            for (size_t d = 0; d < D; ++d) s += w[d] * out.input[d];
            out.hidden[h] = std::tanh(s);
        }

        std::vector<double> logits(V);
        double max_logit = -1e300;
        for (size_t t = 0; t < V; ++t) {
            const double* w = par + policy.off_w2_ + t * H;
            double s = par[policy.off_b2_ + t] + priming[t];
            for (size_t h = 0; h < H; ++h) s += w[h] * out.hidden[h];
            logits[t] = s;
            max_logit = std::max(max_logit, s);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - max_logit);
        out.probs.resize(V);
        for (size_t t = 0; t < V; ++t) out.probs[t] = std::exp(logits[t] - max_logit) / z;
        return out;
    }
};

std::vector<std::vector<double>> Policy::step_probs(const TokenSeq& context, int steps) const {
    validate_context(context);
    if (steps < 0 || steps > arch_.max_out)
        throw InvalidInputError("steps out of range for policy max_out");
    PolicyForward fwd(*this, context);
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<size_t>(steps));
    for (int j = 0; j < steps; ++j) out.push_back(fwd.step(j).probs);
    return out;
}

double Policy::log_prob(const TokenSeq& context, const TokenSeq& seq) const {
    validate_context(context);
    validate_seq(vocab_, seq);
    if (static_cast<int>(seq.size()) > arch_.max_out)
        throw InvalidInputError("sequence longer than policy max output length");

    PolicyForward fwd(*this, context);
    double lp = 0.0;
    for (size_t j = 0; j < seq.size(); ++j) {
        StepForward s = fwd.step(static_cast<int>(j));
        lp += std::log(s.probs[static_cast<size_t>(seq[j])]);
    }
    if (static_cast<int>(seq.size()) < arch_.max_out) {
        StepForward s = fwd.step(static_cast<int>(seq.size()));
        lp += std::log(s.probs[kEos]);
    }
    // else: EOS is forced at position max_out, contributing log(1) = 0.
    if (!std::isfinite(lp)) throw NumericError("non-finite log probability");
    return lp;
}

TokenSeq Policy::sample(const TokenSeq& context, uint64_t rng_seed, int max_len) const {
    validate_context(context);
    if (max_len < 1) throw InvalidInputError("sample max_len must be >= 1");
    const int cap = std::min(max_len, arch_.max_out);

    PolicyForward fwd(*this, context);
    Rng rng(mix_seed(rng_seed, 0x73616d70));  // "samp"
    TokenSeq out;
    for (int j = 0; j < cap; ++j) {
        StepForward s = fwd.step(j);
        Token t = static_cast<Token>(rng.categorical(s.probs));
        if (t == kEos) break;
        out.push_back(t);
    }
    return out;
}

std::vector<double> Policy::grad_from_step_dlogits(
    const TokenSeq& context, const std::vector<std::vector<double>>& dlogits) const {
    if (frozen_) throw FrozenPolicyError("gradient requested on a frozen policy");
    validate_context(context);
    if (static_cast<int>(dlogits.size()) > arch_.max_out)
        throw InvalidInputError("more step gradients than output positions");

    const size_t V = static_cast<size_t>(vocab_.size);
    const size_t D = static_cast<size_t>(arch_.embed_dim);
    const size_t H = static_cast<size_t>(arch_.hidden_dim);
    const double* par = params_.data();

    PolicyForward fwd(*this, context);
    std::vector<double> grad(params_.size(), 0.0);
    std::vector<double> dpool(D, 0.0);        // gradient flowing into the context pool
    std::vector<double> dlogits_sum(V, 0.0);  // accumulates for the priming E-rows

    for (size_t j = 0; j < dlogits.size(); ++j) {
        const StepForward s = fwd.step(static_cast<int>(j));
        const std::vector<double>& dl = dlogits[j];
        if (dl.size() != V) throw InvalidInputError("step gradient has wrong vocab size");
        for (size_t t = 0; t < V; ++t) dlogits_sum[t] += dl[t];

        std::vector<double> dh(H, 0.0);
        for (size_t t = 0; t < V; ++t) {
            const double g = dl[t];
            if (g == 0.0) continue;
            double* gw2 = grad.data() + off_w2_ + t * H;
            const double* w2 = par + off_w2_ + t * H;
            for (size_t h = 0; h < H; ++h) {
                gw2[h] += g * s.hidden[h];
                dh[h] += g * w2[h];
            }
            grad[off_b2_ + t] += g;
        }

        std::vector<double> dx(D, 0.0);
        for (size_t h = 0; h < H; ++h) {
            const double dpre = dh[h] * (1.0 - s.hidden[h] * s.hidden[h]);
            double* gw1 = grad.data() + off_w1_ + h * D;
            const double* w1 = par + off_w1_ + h * D;
            for (size_t d = 0; d < D; ++d) {
                gw1[d] += dpre * s.input[d];
                dx[d] += dpre * w1[d];
            }
            grad[off_b1_ + h] += dpre;
        }

        double* gpos = grad.data() + off_pos_ + j * D;
        for (size_t d = 0; d < D; ++d) {
            gpos[d] += dx[d];
            dpool[d] += dx[d];  // x = pool + pos_emb
        }
    }

    // Priming term: logits_t += gain * dot(E[t], pool), content tokens only.
    const double gain = arch_.priming_gain;
    for (size_t t = 1; t < V; ++t) {
        double* ge = grad.data() + off_embed_ + t * D;
        const double* erow = par + off_embed_ + t * D;
        for (size_t d = 0; d < D; ++d) {
            ge[d] += gain * dlogits_sum[t] * fwd.pool[d];
            dpool[d] += gain * dlogits_sum[t] * erow[d];
        }
    }

    // pool = weighted sum of context embedding rows (segment means).
    if (!context.empty()) {
        const std::vector<double> w = context_pool_weights(context);
        for (size_t i = 0; i < context.size(); ++i) {
            double* ge = grad.data() + off_embed_ + static_cast<size_t>(context[i]) * D;
            for (size_t d = 0; d < D; ++d) ge[d] += w[i] * dpool[d];
        }
    }
    return grad;
}

std::vector<double> Policy::grad_log_prob(const TokenSeq& context, const TokenSeq& seq) const {
    if (frozen_) throw FrozenPolicyError("gradient requested on a frozen policy");
    validate_context(context);
    validate_seq(vocab_, seq);
    if (static_cast<int>(seq.size()) > arch_.max_out)
        throw InvalidInputError("sequence longer than policy max output length");

    const size_t V = static_cast<size_t>(vocab_.size);
    const int steps =
        static_cast<int>(seq.size()) + (static_cast<int>(seq.size()) < arch_.max_out ? 1 : 0);
    const auto tables = step_probs(context, steps);

    std::vector<std::vector<double>> dlogits(static_cast<size_t>(steps));
    for (int j = 0; j < steps; ++j) {
        const Token target = j < static_cast<int>(seq.size()) ? seq[static_cast<size_t>(j)] : kEos;
        dlogits[static_cast<size_t>(j)].resize(V);
        for (size_t t = 0; t < V; ++t)
            dlogits[static_cast<size_t>(j)][t] =
                (static_cast<Token>(t) == target ? 1.0 : 0.0) - tables[static_cast<size_t>(j)][t];
    }
    return grad_from_step_dlogits(context, dlogits);
}

size_t sequence_space_size(const Vocab& vocab, int max_len) {
    const size_t content = static_cast<size_t>(vocab.size - 1);  // every non-EOS token
    size_t total = 0, stratum = 1;
    for (int k = 0; k <= max_len; ++k) {
        total += stratum;
        if (k < max_len) {
            if (stratum > (static_cast<size_t>(1) << 50) / std::max<size_t>(content, 1))
                return static_cast<size_t>(-1);  // saturate; caller compares against cap
            stratum *= content;
        }
    }
    return total;
}

ExactDistribution Policy::enumerate_distribution(const TokenSeq& context, int max_len,
                                                 size_t cap) const {
    validate_context(context);
    if (max_len < 0) throw InvalidInputError("enumeration max_len must be >= 0");
    const int L = std::min(max_len, arch_.max_out);
    const size_t space = sequence_space_size(vocab_, L);
    if (space > cap)
        throw EnumerationTooLargeError("sequence space " + std::to_string(space) +
                                       " exceeds enumeration cap " + std::to_string(cap));

    const auto tables = step_probs(context, L);
    ExactDistribution dist;
    dist.support.reserve(space);
    dist.probs.reserve(space);

    TokenSeq seq;
    // Depth-first: emit the current prefix as an EOS-terminated sequence, then
    // extend with each non-EOS token in id order. The boundary stratum (length
    // exactly L) absorbs the continuation mass when L < max_out, matching
    // sample() truncation; when L == max_out the EOS step there is forced, so
    // its probability is exactly exp(log_prob).
    auto emit = [&](auto&& self, double prefix_prob, int depth) -> void {
        if (depth == L) {
            dist.support.push_back(seq);
            dist.probs.push_back(prefix_prob);
            return;
        }
        dist.support.push_back(seq);
        dist.probs.push_back(prefix_prob * tables[static_cast<size_t>(depth)][kEos]);
        for (Token t = 1; t < vocab_.size; ++t) {
            seq.push_back(t);
            self(self, prefix_prob * tables[static_cast<size_t>(depth)][static_cast<size_t>(t)],
                 depth + 1);
            seq.pop_back();
        }
    };
    emit(emit, 1.0, 0);

    // Reorder by length then lexicographic token order for a stable layout.
    std::vector<size_t> order(dist.support.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (dist.support[a].size() != dist.support[b].size())
            return dist.support[a].size() < dist.support[b].size();
        return dist.support[a] < dist.support[b];
    });
    ExactDistribution sorted;
    sorted.support.reserve(order.size());
    sorted.probs.reserve(order.size());
    for (size_t i : order) {
        sorted.support.push_back(std::move(dist.support[i]));
        sorted.probs.push_back(dist.probs[i]);
    }
    return sorted;
}

double kl_exact_enumerated(const Policy& p, const Policy& q, const TokenSeq& context, size_t cap) {
    if (p.vocab().size != q.vocab().size || p.arch().max_out != q.arch().max_out)
        throw InvalidInputError("KL requires matching vocab and max_out");
    const ExactDistribution dp = p.enumerate_distribution(context, p.arch().max_out, cap);
    const ExactDistribution dq = q.enumerate_distribution(context, q.arch().max_out, cap);
    double kl = 0.0;
    for (size_t i = 0; i < dp.support.size(); ++i)
        kl += xlogy(dp.probs[i], dp.probs[i] / dq.probs[i]);
    return kl;
}

// --- checkpoint I/O ---------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'P', 'O', 'P', 'I', '1'};

template <class T>
void write_raw(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw InvalidInputError("checkpoint truncated");
    return v;
}

}  // namespace

void save_checkpoint(const Policy& policy, const std::string& path, uint64_t config_hash) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInputError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_raw<uint32_t>(os, static_cast<uint32_t>(policy.vocab().size));
    write_raw<uint32_t>(os, static_cast<uint32_t>(policy.arch().embed_dim));
    write_raw<uint32_t>(os, static_cast<uint32_t>(policy.arch().hidden_dim));
    write_raw<uint32_t>(os, static_cast<uint32_t>(policy.arch().context_window));
    write_raw<uint32_t>(os, static_cast<uint32_t>(policy.arch().max_out));
    write_raw<double>(os, policy.arch().priming_gain);
    write_raw<uint8_t>(os, static_cast<uint8_t>(policy.role()));
    write_raw<uint8_t>(os, policy.frozen() ? 1 : 0);
    write_raw<uint64_t>(os, config_hash);
    write_raw<uint64_t>(os, policy.num_params());
    for (double v : policy.params()) write_raw<double>(os, v);
    if (!os) throw InvalidInputError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInputError("cannot open checkpoint: " + path);
    char magic[5];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw InvalidInputError("bad checkpoint magic in " + path);

    Vocab vocab(static_cast<int>(read_raw<uint32_t>(is)));
    PolicyArch arch;
    arch.embed_dim = static_cast<int>(read_raw<uint32_t>(is));
    arch.hidden_dim = static_cast<int>(read_raw<uint32_t>(is));
    arch.context_window = static_cast<int>(read_raw<uint32_t>(is));
    arch.max_out = static_cast<int>(read_raw<uint32_t>(is));
    arch.priming_gain = read_raw<double>(is);
    const auto role_raw = read_raw<uint8_t>(is);
    if (role_raw > static_cast<uint8_t>(PolicyRole::off_the_shelf))
        throw InvalidInputError("bad policy role in checkpoint header");
    const bool frozen = read_raw<uint8_t>(is) != 0;
    const uint64_t config_hash = read_raw<uint64_t>(is);
    const uint64_t n = read_raw<uint64_t>(is);

    Policy policy(vocab, arch, static_cast<PolicyRole>(role_raw), 0);
    if (n != policy.num_params())
        throw InvalidInputError("checkpoint parameter count mismatches header dims");
    std::vector<double> params(n);
    for (auto& v : params) v = read_raw<double>(is);
    policy.set_params(params);
    if (frozen) policy.freeze();
    return LoadedCheckpoint{std::move(policy), config_hash};
}

}  // namespace popi
