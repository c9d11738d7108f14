#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shelltopics/corpus.hpp"
#include "shelltopics/model.hpp"
#include "shelltopics/rng.hpp"
#include "shelltopics/state.hpp"

namespace shelltopics {

enum class LengthMode { Fixed, TruncatedPoisson };

struct SimulationParams {
    ModelKind model = ModelKind::CBC;
    std::int32_t n_sessions = 100;
    std::int32_t commands_per_session = 10;
    std::int32_t words_per_command = 10;
    LengthMode lengths = LengthMode::Fixed;  // TruncatedPoisson keeps lengths >= 1
    std::int32_t vocab_size = 50;
    std::int32_t k_true = 5;
    std::int32_t h_true = 5;
    double eta_sim = 0.1;    // word emission concentration
    double tau_sim = 0.1;    // nested command-topic / parent emission concentration
    double theta_sim = 0.7;  // secondary models: probability a word is topic-specific
    double parent_prob = 0.3;  // parent-child: chance a later word opens a new parent
    std::uint64_t seed = 1;
};

struct SimulatedData {
    Corpus corpus;
    LatentState truth;
    std::vector<std::vector<double>> phi;      // emission rows ([0] shared when secondary)
    std::vector<std::vector<double>> psi;      // nested: command-topic rows
    std::vector<std::vector<double>> phi_parent;
    std::vector<std::vector<double>> phi_child;
};

// Draws a corpus from the chosen generative process with uniform topic
// weights.  Session labels (and nested command labels) are returned as truth
// for recovery scoring.
inline SimulatedData generate(const SimulationParams& p) {
    if (p.n_sessions < 1 || p.commands_per_session < 1 || p.words_per_command < 1)
        throw ConfigError("simulation sizes must be positive");
    if (p.vocab_size < 2) throw ConfigError("simulation vocabulary must have at least 2 words");
    if (p.k_true < 1 || p.h_true < 1) throw ConfigError("true topic counts must be positive");
    Rng rng(p.seed);
    SimulatedData out;

    auto draw_rows = [&](std::int32_t rows, std::int32_t dim, double conc) {
        std::vector<double> alpha(dim, conc);
        std::vector<std::vector<double>> m(rows);
        for (auto& row : m) row = rng.dirichlet(alpha);
        return m;
    };
    auto length = [&](std::int32_t mean) {
        if (p.lengths == LengthMode::Fixed) return mean;
        std::int64_t n = rng.poisson(static_cast<double>(mean));
        return static_cast<std::int32_t>(std::max<std::int64_t>(n, 1));
    };

    bool secondary = has_secondary(p.model);
    bool nested = is_nested(p.model);
    bool clusters = has_word_clusters(p.model);
    std::int32_t n_word_topics = nested ? p.h_true : p.k_true;

    if (clusters) {
        out.phi_parent = draw_rows(p.k_true, p.vocab_size, p.tau_sim);
        out.phi_child = draw_rows(p.h_true, p.vocab_size, p.eta_sim);
        out.truth.u.resize(p.vocab_size);
        for (auto& v : out.truth.u)
            v = static_cast<std::int32_t>(rng.uniform_index(p.h_true));
    } else {
        out.phi = draw_rows(n_word_topics + 1, p.vocab_size, p.eta_sim);  // [0] shared
        if (nested) out.psi = draw_rows(p.k_true, p.h_true, p.tau_sim);
    }

    out.truth.t.resize(p.n_sessions);
    if (nested) out.truth.s.resize(p.n_sessions);
    if (secondary) out.truth.z.resize(p.n_sessions);
    out.corpus.sessions.resize(p.n_sessions);

    for (std::int32_t d = 0; d < p.n_sessions; ++d) {
        std::int32_t k = static_cast<std::int32_t>(rng.uniform_index(p.k_true));
        out.truth.t[d] = k;
        Session& sess = out.corpus.sessions[d];
        sess.session_id = "sim-" + std::to_string(d);
        std::int32_t n_cmd = length(p.commands_per_session);
        sess.commands.resize(n_cmd);
        if (nested) out.truth.s[d].resize(n_cmd);
        if (secondary) out.truth.z[d].resize(n_cmd);
        for (std::int32_t j = 0; j < n_cmd; ++j) {
            Command& cmd = sess.commands[j];
            std::int32_t n_w = length(p.words_per_command);
            cmd.words.resize(n_w);
            std::int32_t word_topic = k;
            if (nested) {
                word_topic = static_cast<std::int32_t>(rng.categorical(out.psi[k]));
                out.truth.s[d][j] = word_topic;
            }
            if (secondary) out.truth.z[d][j].resize(n_w);
            if (clusters) {
                std::int32_t current_parent = -1;
                for (std::int32_t i = 0; i < n_w; ++i) {
                    bool parent = i == 0 || rng.uniform() < p.parent_prob;
                    if (parent) {
                        cmd.parent_pos.push_back(i);
                        cmd.words[i] = static_cast<std::int32_t>(
                            rng.categorical(out.phi_parent[k]));
                        current_parent = cmd.words[i];
                    } else {
                        cmd.words[i] = static_cast<std::int32_t>(
                            rng.categorical(out.phi_child[out.truth.u[current_parent]]));
                    }
                }
            } else {
                cmd.parent_pos = {0};
                for (std::int32_t i = 0; i < n_w; ++i) {
                    std::int32_t row = word_topic + 1;
                    if (secondary) {
                        std::uint8_t z = rng.bernoulli(p.theta_sim) ? 1 : 0;
                        out.truth.z[d][j][i] = z;
                        if (!z) row = 0;
                    }
                    cmd.words[i] = static_cast<std::int32_t>(rng.categorical(out.phi[row]));
                }
            }
        }
    }

    // vocabulary covers the full simulated id range; command frequencies are
    // recomputed from the drawn corpus so frequency-based seeding works
    std::vector<std::int64_t> freq(p.vocab_size, 0);
    std::vector<char> seen(p.vocab_size, 0);
    for (const auto& sess : out.corpus.sessions)
        for (const auto& cmd : sess.commands) {
            for (auto w : cmd.words)
                if (!seen[w]) {
                    seen[w] = 1;
                    ++freq[w];
                }
            for (auto w : cmd.words) seen[w] = 0;
        }
    for (std::int32_t v = 0; v < p.vocab_size; ++v)
        out.corpus.vocab.add("w" + std::to_string(v), freq[v]);
    out.corpus.vocab.total_commands = out.corpus.total_commands();
    validate_corpus(out.corpus);
    return out;
}

// Session-level 80/20 style split by shuffled assignment; both halves keep the
// full vocabulary so held-out encoding is the identity.
inline std::pair<Corpus, Corpus> split_sessions(const Corpus& corpus, double train_fraction,
                                                std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must lie strictly between 0 and 1");
    Rng rng(seed);
    auto order = rng.permutation(static_cast<int>(corpus.sessions.size()));
    std::size_t n_train = static_cast<std::size_t>(
        std::round(train_fraction * static_cast<double>(corpus.sessions.size())));
    n_train = std::min(std::max<std::size_t>(n_train, 1), corpus.sessions.size() - 1);
    Corpus train, test;
    train.vocab = corpus.vocab;
    test.vocab = corpus.vocab;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? train : test).sessions.push_back(corpus.sessions[order[i]]);
    return {std::move(train), std::move(test)};
}

} // namespace shelltopics
